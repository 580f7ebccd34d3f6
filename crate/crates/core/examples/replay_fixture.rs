//! Regenerates the bundled end-to-end replay fixture.
//!
//! ```text
//! cargo run -p aql-core --example replay_fixture -- fixtures/e2e/replay
//! ```
//!
//! Three providers with hand-countable structure:
//!
//! * Google: 30 queries. q00–q14 are captured as `?q=Q` twice and as
//!   `?q=Q&hl=en` once; q15–q29 as `?q=Q&start=10` and `?q=Q&start=10&hl=de`,
//!   q15–q24 also as `?q=Q&start=20`. 14 noise captures: 5 redirects, 3
//!   images, 4 without `q`, 2 with an empty `q`. Every SERP has 10 results,
//!   except q05 (no result markup). q03 fails twice before succeeding, q07
//!   always fails, q11 has no archived body.
//! * Chefkoch: 20 queries at pages s0 and s1, c00–c04 with a second s0
//!   capture, c00–c09 also at s2, plus 2 not-found captures. 8 results per
//!   SERP; the registry caps downloads at 10.
//! * Bing: 20 parameter queries (b16–b19 with an unrelated fragment), 5
//!   fragment queries, 8 longer duplicates of b00–b07, 3 JSON captures and 2
//!   captures without a query. 5 results per SERP; even queries use the
//!   current layout, odd ones the older layout. b09 fails once.

use std::fs;
use std::path::PathBuf;

use aql_core::archive::replay::ReplayFixtureBuilder;
use aql_core::archive::Capture;

const GOOGLE: [&str; 30] = [
    "covid 19 usa map",
    "weather tomorrow",
    "how to bake bread",
    "cheap flights to london",
    "python list comprehension",
    "world cup 2014 results",
    "best pizza near me",
    "how tall is the eiffel tower",
    "learn guitar chords",
    "used cars for sale",
    "what is the capital of australia",
    "mortgage calculator",
    "harry potter books in order",
    "symptoms of flu",
    "translate hello to spanish",
    "jobs in new york",
    "lasagna recipe",
    "how to tie a tie",
    "stock market today",
    "rust programming language",
    "yoga for beginners",
    "election results 2016",
    "marathon training plan",
    "how to change a tire",
    "solar panels cost",
    "the history of rome",
    "free online games",
    "iphone 6 review",
    "vegan protein sources",
    "time zone converter",
];

const CHEFKOCH: [&str; 20] = [
    "backen dinkelmehl",
    "apfelkuchen",
    "käsespätzle",
    "kartoffelsalat",
    "schnitzel wiener art",
    "gulasch",
    "brot backen",
    "linsensuppe",
    "zwiebelkuchen",
    "rinderrouladen",
    "pfannkuchen ohne milch",
    "spargel",
    "lebkuchen",
    "marmorkuchen",
    "rotkohl",
    "quiche lorraine",
    "bananenbrot",
    "kürbissuppe",
    "hefezopf",
    "frikadellen",
];

const BING: [&str; 25] = [
    "news today",
    "facebook login",
    "recette crêpes",
    "tradutor ingles portugues",
    "how to screenshot on windows",
    "nba scores",
    "paris hotels",
    "youtube",
    "weather seattle",
    "definition of love",
    "bitcoin price",
    "que es la fotosintesis",
    "microsoft office download",
    "cute puppies",
    "hamburg wetter",
    "movies 2012",
    "how many ounces in a cup",
    "best laptops",
    "olympic games",
    "images of mountains",
    "translate",
    "amazon prime",
    "calculator",
    "maps",
    "email",
];

const GOOGLE_DOMAINS: [&str; 10] = [
    "en.wikipedia.org",
    "www.youtube.com",
    "www.nytimes.com",
    "www.bbc.co.uk",
    "www.google.com",
    "stackoverflow.com",
    "www.amazon.com",
    "github.com",
    "www.reddit.com",
    "medium.com",
];

const BING_DOMAINS: [&str; 5] =
    ["www.msn.com", "en.wikipedia.org", "www.bing.com", "www.imdb.com", "www.microsoft.com"];

fn ts(i: usize, year_shift: usize, day: usize) -> String {
    let year = 2008 + i % 14 + year_shift;
    let month = 1 + (i * 5) % 12;
    format!("{year}{month:02}{day:02}{:02}0000", 8 + i % 12)
}

fn slug(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join("-")
}

fn plus(q: &str) -> String {
    percent_encode(q).replace("%20", "+")
}

fn percent_encode(q: &str) -> String {
    let mut out = String::new();
    for b in q.bytes() {
        match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'-' | b'.' | b'_' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('"', "&quot;")
}

fn google_serp(q: &str, results: bool) -> String {
    let mut html = format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{0} - Google Search</title></head><body>\n\
         <form action=\"/search\"><input name=\"q\" value=\"{0}\"></form>\n<div id=\"res\">\n",
        escape(q)
    );
    if results {
        for (r, domain) in GOOGLE_DOMAINS.iter().enumerate() {
            let rank = r + 1;
            html.push_str(&format!(
                "<div class=\"g\"><h3><a href=\"https://{domain}/{s}/{rank}\">{q} &ndash; {domain}</a></h3>\
                 <span class=\"st\">Everything about {q}, page {rank} on {domain}.</span></div>\n",
                s = slug(q),
                q = escape(q),
            ));
        }
    } else {
        html.push_str(&format!("<p>Your search - <b>{}</b> - did not match any documents.</p>\n", escape(q)));
    }
    html.push_str("</div></body></html>\n");
    html
}

fn chefkoch_serp(q: &str, page: usize) -> String {
    let mut html = format!(
        "<!doctype html>\n<html lang=\"de\"><head><meta charset=\"utf-8\"><title>{0} Rezepte | Chefkoch</title></head><body>\n\
         <form action=\"/rs/s0/\"><input name=\"query\" value=\"{0}\"></form>\n<main>\n",
        escape(q)
    );
    for r in 0..8 {
        let id = 1000 + page * 8 + r;
        html.push_str(&format!(
            "<article class=\"rsel-item\"><a href=\"/rezepte/{id}/{s}-{r}.html\"><h2>{q} Rezept {n}</h2>\
             <p class=\"ds-text\">Ein einfaches Rezept mit {q} und der Zubereitung für die ganze Familie.</p></a></article>\n",
            s = slug(q),
            q = escape(q),
            n = r + 1,
        ));
    }
    html.push_str("</main></body></html>\n");
    html
}

fn bing_serp(i: usize, q: &str) -> String {
    let mut html = format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{0} - Bing</title></head><body>\n",
        escape(q)
    );
    if i % 2 == 0 {
        html.push_str(&format!(
            "<form id=\"sb_form\"><input id=\"sb_form_q\" name=\"q\" value=\"{}\"></form>\n<ol id=\"b_results\">\n",
            escape(q)
        ));
        for (r, domain) in BING_DOMAINS.iter().enumerate() {
            html.push_str(&format!(
                "<li class=\"b_algo\"><h2><a href=\"https://{domain}/{s}?r={rank}\">{q} | {domain}</a></h2>\
                 <div class=\"b_caption\"><p>Results for {q} from {domain}.</p></div></li>\n",
                s = slug(q),
                q = escape(q),
                rank = r + 1,
            ));
        }
        html.push_str("<li class=\"b_ans\">Related searches</li>\n</ol>\n");
    } else {
        html.push_str(&format!("<form><input name=\"q\" value=\"{}\"></form>\n<div id=\"results\">\n", escape(q)));
        for (r, domain) in BING_DOMAINS.iter().enumerate() {
            html.push_str(&format!(
                "<div class=\"sa_wr\"><h3><a href=\"http://{domain}/{s}.htm\">{q} at {domain}</a></h3>\
                 <p>Old layout result {rank} for {q}.</p></div>\n",
                s = slug(q),
                q = escape(q),
                rank = r + 1,
            ));
        }
        html.push_str("</div>\n");
    }
    html.push_str("</body></html>\n");
    html
}

struct Writer {
    builder: ReplayFixtureBuilder,
    n: usize,
}

impl Writer {
    fn add(&mut self, url: &str, ts: &str, status: u16, mime: &str, body: Option<&str>, fail_times: Option<u32>) {
        self.n += 1;
        let capture = Capture::new(url, ts, status, mime, format!("FIXTURE{:05}", self.n)).expect("valid capture");
        self.builder.add(&capture, body.map(str::as_bytes), fail_times).expect("fixture write");
    }
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/e2e/replay".into()));
    if root.exists() {
        fs::remove_dir_all(&root).expect("clear old fixture");
    }
    let mut w = Writer { builder: ReplayFixtureBuilder::create(&root).expect("create fixture"), n: 0 };
    let html = "text/html";

    for (i, q) in GOOGLE.iter().enumerate() {
        let base = format!("https://www.google.com/search?q={}", plus(q));
        let serp = google_serp(q, i != 5);
        let (body, fail) = match i {
            3 => (Some(serp.as_str()), Some(2)),
            7 => (None, Some(1)),
            11 => (None, None),
            _ => (Some(serp.as_str()), None),
        };
        if i < 15 {
            w.add(&base, &ts(i, 0, 10), 200, html, body, fail);
            w.add(&base, &ts(i, 1, 10), 200, html, Some(&serp), None);
            w.add(&format!("{base}&hl=en"), &ts(i, 0, 12), 200, html, Some(&serp), None);
        } else {
            w.add(&format!("{base}&start=10"), &ts(i, 0, 10), 200, html, body, fail);
            w.add(&format!("{base}&start=10&hl=de"), &ts(i, 0, 11), 200, html, Some(&serp), None);
            if i < 25 {
                w.add(&format!("{base}&start=20"), &ts(i, 0, 12), 200, html, Some(&serp), None);
            }
        }
    }
    for n in 0..5 {
        let url = format!("https://www.google.com/search?q=redirect+{n}");
        w.add(&url, &ts(n, 0, 20), 302, html, None, None);
    }
    for n in 0..3 {
        let url = format!("https://www.google.com/search?q=logo+{n}&tbm=isch");
        w.add(&url, &ts(n, 0, 21), 200, "image/png", None, None);
    }
    for (n, rest) in ["hl=en", "hl=de&source=hp", "tbm=nws", "ie=UTF-8"].iter().enumerate() {
        let url = format!("https://www.google.com/search?{rest}");
        w.add(&url, &ts(n, 0, 22), 200, html, Some("<html></html>"), None);
    }
    w.add("https://www.google.com/search?q=&hl=en", &ts(0, 0, 23), 200, html, Some("<html></html>"), None);
    w.add("https://www.google.com/search?q=+", &ts(1, 0, 23), 200, html, Some("<html></html>"), None);

    for (i, q) in CHEFKOCH.iter().enumerate() {
        let page = |p: usize| format!("https://www.chefkoch.de/rs/s{p}/{}/Rezepte.html", percent_encode(q));
        w.add(&page(0), &ts(i, 0, 5), 200, html, Some(&chefkoch_serp(q, 0)), None);
        w.add(&page(1), &ts(i, 0, 6), 200, html, Some(&chefkoch_serp(q, 1)), None);
        if i < 5 {
            w.add(&page(0), &ts(i, 2, 5), 200, html, Some(&chefkoch_serp(q, 0)), None);
        }
        if i < 10 {
            w.add(&page(2), &ts(i, 0, 7), 200, html, Some(&chefkoch_serp(q, 2)), None);
        }
    }
    for n in 0..2 {
        let url = format!("https://www.chefkoch.de/rs/s0/verschwunden{n}/Rezepte.html");
        w.add(&url, &ts(n, 0, 8), 404, html, None, None);
    }

    for (i, q) in BING.iter().enumerate() {
        let serp = bing_serp(i, q);
        let fail = (i == 9).then_some(1);
        if i < 20 {
            let mut url = format!("https://www.bing.com/search?q={}&form=QBLH", plus(q));
            if i >= 16 {
                url.push_str("#b_results");
            }
            w.add(&url, &ts(i, 0, 15), 200, html, Some(&serp), fail);
            if i < 8 {
                w.add(&format!("{url}&sp=-1"), &ts(i, 0, 16), 200, html, Some(&serp), None);
            }
        } else {
            let url = format!("https://www.bing.com/search#q={}", plus(q));
            w.add(&url, &ts(i, 0, 15), 200, html, Some(&serp), None);
        }
    }
    for n in 0..3 {
        let url = format!("https://www.bing.com/search?q=feed+{n}&format=rss");
        w.add(&url, &ts(n, 0, 17), 200, "application/json", None, None);
    }
    w.add("https://www.bing.com/search?form=QBLH", &ts(0, 0, 18), 200, html, Some("<html></html>"), None);
    w.add("https://www.bing.com/search?setlang=de", &ts(1, 0, 18), 200, html, Some("<html></html>"), None);

    let n = w.n;
    w.builder.finish().expect("finish fixture");
    println!("{n} captures written to {}", root.display());
}
