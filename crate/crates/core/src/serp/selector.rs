//! The supported CSS selector subset.
//!
//! Accepted: type selectors and `*`, `.class`, `#id`, attribute selectors
//! (`[a]`, `[a=v]`, `[a~=v]`, `[a|=v]`, `[a^=v]`, `[a$=v]`, `[a*=v]`),
//! descendant (whitespace) and child (`>`) combinators, and
//! `:nth-of-type(...)`. Anything else (selector lists, sibling combinators,
//! other pseudo-classes and pseudo-elements) is rejected at load time.

use scraper::Selector;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported selector {selector:?}: {reason}")]
pub struct SelectorError {
    pub selector: String,
    pub reason: String,
}

/// A selector checked against the supported subset and compiled.
#[derive(Debug, Clone)]
pub struct CssPath {
    source: String,
    compiled: Selector,
}

impl PartialEq for CssPath {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl CssPath {
    pub fn parse(source: &str) -> Result<Self, SelectorError> {
        check_subset(source)?;
        let compiled = Selector::parse(source)
            .map_err(|e| SelectorError { selector: source.to_string(), reason: e.to_string() })?;
        Ok(Self { source: source.to_string(), compiled })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn selector(&self) -> &Selector {
        &self.compiled
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_' || !c.is_ascii()
}

fn check_subset(source: &str) -> Result<(), SelectorError> {
    let fail = |reason: String| SelectorError { selector: source.to_string(), reason };
    if source.trim().is_empty() {
        return Err(fail("empty selector".into()));
    }
    let chars: Vec<char> = source.chars().collect();
    let mut i = 0;
    let mut expecting_compound = true;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '>' => {
                if expecting_compound {
                    return Err(fail("combinator without a left-hand selector".into()));
                }
                expecting_compound = true;
                i += 1;
            }
            ',' => return Err(fail("selector lists are not supported".into())),
            '+' | '~' => return Err(fail(format!("sibling combinator `{c}` is not supported"))),
            _ => {
                if !expecting_compound && i > 0 && !chars[i - 1].is_whitespace() && chars[i - 1] != '>' {
                    return Err(fail(format!("unexpected `{c}`")));
                }
                i = scan_compound(&chars, i).map_err(fail)?;
                expecting_compound = false;
            }
        }
    }
    if expecting_compound {
        return Err(fail("dangling combinator".into()));
    }
    Ok(())
}

/// Scans one compound selector starting at `start`; returns the index just
/// after it.
fn scan_compound(chars: &[char], start: usize) -> Result<usize, String> {
    let mut i = start;
    if chars[i] == '*' {
        i += 1;
    } else {
        while i < chars.len() && is_ident_char(chars[i]) {
            i += 1;
        }
    }
    loop {
        let Some(&c) = chars.get(i) else { break };
        match c {
            '.' | '#' => {
                let name_start = i + 1;
                i = name_start;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                if i == name_start {
                    return Err(format!("missing name after `{c}`"));
                }
            }
            '[' => {
                let close = scan_attribute(chars, i)?;
                i = close + 1;
            }
            ':' => {
                let rest: String = chars[i..].iter().collect();
                if rest.starts_with("::") {
                    return Err("pseudo-elements are not supported".into());
                }
                if !rest.starts_with(":nth-of-type(") {
                    let name: String = rest[1..].chars().take_while(|c| is_ident_char(*c)).collect();
                    return Err(format!("pseudo-class `:{name}` is not supported"));
                }
                let open = i + ":nth-of-type(".chars().count();
                let close = chars[open..]
                    .iter()
                    .position(|&c| c == ')')
                    .map(|p| open + p)
                    .ok_or("unterminated :nth-of-type(")?;
                let arg: String = chars[open..close].iter().collect();
                let arg = arg.trim();
                let valid = arg == "odd"
                    || arg == "even"
                    || arg.chars().all(|c| c.is_ascii_digit() || matches!(c, 'n' | '+' | '-' | ' '));
                if arg.is_empty() || !valid {
                    return Err(format!("bad :nth-of-type argument {arg:?}"));
                }
                i = close + 1;
            }
            c if c.is_whitespace() || c == '>' || c == ',' || c == '+' || c == '~' => break,
            other => return Err(format!("unexpected `{other}`")),
        }
    }
    if i == start {
        return Err(format!("unexpected `{}`", chars[start]));
    }
    Ok(i)
}

fn scan_attribute(chars: &[char], open: usize) -> Result<usize, String> {
    let mut i = open + 1;
    let mut quote: Option<char> = None;
    while i < chars.len() {
        let c = chars[i];
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => quote = Some(c),
            None if c == ']' => {
                let body: String = chars[open + 1..i].iter().collect();
                check_attribute_body(&body)?;
                return Ok(i);
            }
            None => {}
        }
        i += 1;
    }
    Err("unterminated attribute selector".into())
}

fn check_attribute_body(body: &str) -> Result<(), String> {
    let body = body.trim();
    let name_len = body.chars().take_while(|c| is_ident_char(*c)).map(char::len_utf8).sum::<usize>();
    if name_len == 0 {
        return Err("attribute selector without a name".into());
    }
    let rest = body[name_len..].trim_start();
    if rest.is_empty() {
        return Ok(());
    }
    let value = ["~=", "|=", "^=", "$=", "*=", "="]
        .iter()
        .find_map(|op| rest.strip_prefix(op))
        .ok_or_else(|| format!("unsupported attribute operator in [{body}]"))?
        .trim();
    let quoted = value.len() >= 2
        && ((value.starts_with('"') && value.ends_with('"')) || (value.starts_with('\'') && value.ends_with('\'')));
    if quoted || (!value.is_empty() && value.chars().all(is_ident_char)) {
        Ok(())
    } else {
        Err(format!("bad attribute value in [{body}]"))
    }
}
