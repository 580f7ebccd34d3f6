//! Minimal WARC 1.1 writer and reader.
//!
//! Every record is compressed as its own gzip member so a record can be
//! read from its byte offset alone. Files are rolled once they exceed the
//! configured size. The reader accepts gzip and plain records and verifies
//! the declared length and block/payload digests.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::corpus::ids::name_uuid;
use crate::timestamp::Timestamp14;

pub const DEFAULT_ROLL_SIZE: u64 = 1 << 30;

/// Where a record lives: file path, record id and byte offset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WarcLocation {
    pub file: PathBuf,
    pub record_id: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    pub warc_type: String,
    pub record_id: String,
    pub target_uri: String,
    pub timestamp: Timestamp14,
    /// HTTP payload (the body after the HTTP header block) for response
    /// records; the whole block otherwise.
    pub payload: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum WarcError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} @ {offset}: {message}")]
    Corrupt { path: PathBuf, offset: u64, message: String },
}

fn sha1_label(bytes: &[u8]) -> String {
    format!("sha1:{}", data_encoding::BASE32.encode(&Sha1::digest(bytes)))
}

/// `urn:uuid:` record id of the response for a capture.
pub fn response_record_id(url: &str, timestamp: &Timestamp14) -> String {
    format!("urn:uuid:{}", name_uuid(&format!("response {timestamp} {url}")))
}

pub fn request_record_id(url: &str, timestamp: &Timestamp14) -> String {
    format!("urn:uuid:{}", name_uuid(&format!("request {timestamp} {url}")))
}

fn http_response_block(payload: &[u8]) -> Vec<u8> {
    let mut block =
        format!("HTTP/1.1 200 OK\r\nContent-Type: text/html\r\nContent-Length: {}\r\n\r\n", payload.len()).into_bytes();
    block.extend_from_slice(payload);
    block
}

fn http_request_block(uri: &str) -> Vec<u8> {
    let (host, path) = match url::Url::parse(uri) {
        Ok(u) => {
            let mut path = u.path().to_string();
            if let Some(q) = u.query() {
                path.push('?');
                path.push_str(q);
            }
            (u.host_str().unwrap_or("").to_string(), path)
        }
        Err(_) => (String::new(), uri.to_string()),
    };
    format!("GET {path} HTTP/1.1\r\nHost: {host}\r\n\r\n").into_bytes()
}

fn render_record(headers: &[(&str, String)], block: &[u8]) -> Vec<u8> {
    let mut out = b"WARC/1.1\r\n".to_vec();
    for (name, value) in headers {
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(value.as_bytes());
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(format!("Content-Length: {}\r\n\r\n", block.len()).as_bytes());
    out.extend_from_slice(block);
    out.extend_from_slice(b"\r\n\r\n");
    out
}

/// Appends gzip-per-record WARC files named `<prefix>-NNNNN.warc.gz`.
#[derive(Debug)]
pub struct WarcWriter {
    dir: PathBuf,
    prefix: String,
    roll_size: u64,
    index: u32,
    file: Option<(PathBuf, File, u64)>,
    write_requests: bool,
}

impl WarcWriter {
    /// Continues after the highest-numbered existing file in `dir`.
    pub fn open(dir: &Path, prefix: &str, roll_size: u64) -> Result<Self, WarcError> {
        fs::create_dir_all(dir).map_err(|source| WarcError::Io { path: dir.to_path_buf(), source })?;
        let index = warc_files(dir)?.iter().filter_map(|p| file_index(p, prefix)).max().unwrap_or(0);
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            roll_size: roll_size.max(1),
            index,
            file: None,
            write_requests: false,
        })
    }

    pub fn with_requests(mut self, on: bool) -> Self {
        self.write_requests = on;
        self
    }

    fn path_for(&self, index: u32) -> PathBuf {
        self.dir.join(format!("{}-{index:05}.warc.gz", self.prefix))
    }

    fn current(&mut self) -> Result<&mut (PathBuf, File, u64), WarcError> {
        let full = matches!(&self.file, Some((_, _, size)) if *size >= self.roll_size);
        if full {
            self.file = None;
            self.index += 1;
        }
        if self.file.is_none() {
            loop {
                let path = self.path_for(self.index);
                let size = fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
                if size >= self.roll_size {
                    self.index += 1;
                    continue;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|source| WarcError::Io { path: path.clone(), source })?;
                self.file = Some((path, file, size));
                break;
            }
        }
        Ok(self.file.as_mut().expect("opened"))
    }

    fn append(&mut self, record: &[u8], record_id: String) -> Result<WarcLocation, WarcError> {
        let (path, file, size) = self.current()?;
        let io_err = |source| WarcError::Io { path: path.clone(), source };
        let mut gz = GzEncoder::new(Vec::new(), Compression::default());
        gz.write_all(record).map_err(io_err)?;
        let bytes = gz.finish().map_err(io_err)?;
        file.write_all(&bytes).map_err(io_err)?;
        file.flush().map_err(io_err)?;
        let location = WarcLocation { file: path.clone(), record_id, offset: *size };
        *size += bytes.len() as u64;
        Ok(location)
    }

    /// Writes the response record (preceded by its request record when
    /// enabled) and returns the response's location.
    pub fn write_response(
        &mut self,
        target_uri: &str,
        timestamp: &Timestamp14,
        payload: &[u8],
    ) -> Result<WarcLocation, WarcError> {
        let date = timestamp.to_iso8601();
        let response_id = response_record_id(target_uri, timestamp);
        if self.write_requests {
            let block = http_request_block(target_uri);
            let request_id = request_record_id(target_uri, timestamp);
            let record = render_record(
                &[
                    ("WARC-Type", "request".into()),
                    ("WARC-Record-ID", format!("<{request_id}>")),
                    ("WARC-Date", date.clone()),
                    ("WARC-Target-URI", target_uri.into()),
                    ("WARC-Concurrent-To", format!("<{response_id}>")),
                    ("Content-Type", "application/http;msgtype=request".into()),
                    ("WARC-Block-Digest", sha1_label(&block)),
                ],
                &block,
            );
            self.append(&record, request_id)?;
        }
        let block = http_response_block(payload);
        let record = render_record(
            &[
                ("WARC-Type", "response".into()),
                ("WARC-Record-ID", format!("<{response_id}>")),
                ("WARC-Date", date),
                ("WARC-Target-URI", target_uri.into()),
                ("Content-Type", "application/http;msgtype=response".into()),
                ("WARC-Block-Digest", sha1_label(&block)),
                ("WARC-Payload-Digest", sha1_label(payload)),
            ],
            &block,
        );
        self.append(&record, response_id)
    }

    /// Syncs the current file to disk.
    pub fn sync(&mut self) -> Result<(), WarcError> {
        if let Some((path, file, _)) = &self.file {
            file.sync_all().map_err(|source| WarcError::Io { path: path.clone(), source })?;
        }
        Ok(())
    }
}

fn file_index(path: &Path, prefix: &str) -> Option<u32> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix(prefix)?.strip_prefix('-')?.strip_suffix(".warc.gz")?.parse().ok()
}

/// `*.warc` and `*.warc.gz` files in `dir`, sorted by name.
pub fn warc_files(dir: &Path) -> Result<Vec<PathBuf>, WarcError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(WarcError::Io { path: dir.to_path_buf(), source }),
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".warc.gz") || name.ends_with(".warc")
        })
        .collect();
    files.sort();
    Ok(files)
}

struct Counting<R> {
    inner: R,
    count: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count += n as u64;
        Ok(n)
    }
}

impl<R: BufRead> BufRead for Counting<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }
    fn consume(&mut self, amt: usize) {
        self.count += amt as u64;
        self.inner.consume(amt)
    }
}

fn corrupt(path: &Path, offset: u64, message: impl Into<String>) -> WarcError {
    WarcError::Corrupt { path: path.to_path_buf(), offset, message: message.into() }
}

/// Parses one record from `reader` (already positioned after any gzip
/// framing). Returns `Ok(None)` at a clean end of input.
fn parse_record<R: BufRead>(reader: &mut R, path: &Path, offset: u64) -> Result<Option<WarcRecord>, WarcError> {
    let io_err = |e: io::Error| corrupt(path, offset, e.to_string());
    let mut line = String::new();
    if reader.read_line(&mut line).map_err(io_err)? == 0 {
        return Ok(None);
    }
    if line.trim_end() != "WARC/1.1" && line.trim_end() != "WARC/1.0" {
        return Err(corrupt(path, offset, format!("bad version line {:?}", line.trim_end())));
    }
    let mut headers: Vec<(String, String)> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io_err)? == 0 {
            return Err(corrupt(path, offset, "truncated header block"));
        }
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            break;
        }
        let (name, value) =
            trimmed.split_once(':').ok_or_else(|| corrupt(path, offset, format!("bad header {trimmed:?}")))?;
        headers.push((name.trim().to_ascii_lowercase(), value.trim().to_string()));
    }
    let header = |name: &str| headers.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str());
    let length: usize = header("content-length")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(path, offset, "missing Content-Length"))?;
    let mut block = vec![0u8; length];
    reader
        .read_exact(&mut block)
        .map_err(|_| corrupt(path, offset, format!("block shorter than Content-Length {length}")))?;
    let mut trailer = [0u8; 4];
    reader.read_exact(&mut trailer).map_err(|_| corrupt(path, offset, "missing record trailer"))?;
    if &trailer != b"\r\n\r\n" {
        return Err(corrupt(path, offset, "bad record trailer"));
    }
    if let Some(expected) = header("warc-block-digest") {
        if expected != sha1_label(&block) {
            return Err(corrupt(path, offset, "block digest mismatch"));
        }
    }
    let warc_type = header("warc-type").unwrap_or("").to_string();
    let content_type = header("content-type").unwrap_or("");
    let payload = if warc_type == "response" && content_type.starts_with("application/http") {
        let split = block
            .windows(4)
            .position(|w| w == b"\r\n\r\n")
            .ok_or_else(|| corrupt(path, offset, "HTTP header block not terminated"))?;
        block[split + 4..].to_vec()
    } else {
        block
    };
    if let Some(expected) = header("warc-payload-digest") {
        if expected != sha1_label(&payload) {
            return Err(corrupt(path, offset, "payload digest mismatch"));
        }
    }
    let record_id = header("warc-record-id").unwrap_or("").trim_start_matches('<').trim_end_matches('>').to_string();
    let date = header("warc-date").unwrap_or("");
    let timestamp = chrono::DateTime::parse_from_rfc3339(date)
        .map(|dt| Timestamp14::from_datetime(dt.with_timezone(&chrono::Utc)))
        .map_err(|_| corrupt(path, offset, format!("bad WARC-Date {date:?}")))?;
    Ok(Some(WarcRecord {
        warc_type,
        record_id,
        target_uri: header("warc-target-uri").unwrap_or("").to_string(),
        timestamp,
        payload,
    }))
}

fn open_at(path: &Path, offset: u64) -> Result<BufReader<File>, WarcError> {
    let mut file = File::open(path).map_err(|source| WarcError::Io { path: path.to_path_buf(), source })?;
    let len = file.metadata().map(|m| m.len()).unwrap_or(0);
    if offset >= len {
        return Err(corrupt(path, offset, format!("offset beyond end of file ({len} bytes)")));
    }
    file.seek(SeekFrom::Start(offset)).map_err(|source| WarcError::Io { path: path.to_path_buf(), source })?;
    Ok(BufReader::new(file))
}

fn is_gzip<R: BufRead>(reader: &mut R) -> io::Result<bool> {
    Ok(reader.fill_buf()?.starts_with(&[0x1f, 0x8b]))
}

/// Reads the record at `location`, verifying length, digests and id.
pub fn read_warc(location: &WarcLocation) -> Result<WarcRecord, WarcError> {
    let path = &location.file;
    let mut reader = open_at(path, location.offset)?;
    let gz = is_gzip(&mut reader).map_err(|e| corrupt(path, location.offset, e.to_string()))?;
    let record = if gz {
        // Decode the whole member so its CRC and length trailer are checked.
        let mut bytes = Vec::new();
        flate2::bufread::GzDecoder::new(reader)
            .read_to_end(&mut bytes)
            .map_err(|e| corrupt(path, location.offset, e.to_string()))?;
        parse_record(&mut bytes.as_slice(), path, location.offset)?
    } else {
        parse_record(&mut reader, path, location.offset)?
    };
    let record = record.ok_or_else(|| corrupt(path, location.offset, "no record at offset"))?;
    if !location.record_id.is_empty() && record.record_id != location.record_id {
        return Err(corrupt(
            path,
            location.offset,
            format!("record id {} does not match {}", record.record_id, location.record_id),
        ));
    }
    Ok(record)
}

/// Every record of a file with its offset, in file order.
pub fn scan_file(path: &Path) -> Result<Vec<(u64, WarcRecord)>, WarcError> {
    let file = File::open(path).map_err(|source| WarcError::Io { path: path.to_path_buf(), source })?;
    let mut reader = Counting { inner: BufReader::new(file), count: 0 };
    let mut out = Vec::new();
    loop {
        let offset = reader.count;
        let at_end = reader.fill_buf().map_err(|e| corrupt(path, offset, e.to_string()))?.is_empty();
        if at_end {
            break;
        }
        let gz = is_gzip(&mut reader).map_err(|e| corrupt(path, offset, e.to_string()))?;
        let record = if gz {
            // A bufread decoder stops at the member boundary without
            // over-reading, so the counter lands on the next member.
            let mut decoder = flate2::bufread::GzDecoder::new(&mut reader);
            let mut bytes = Vec::new();
            decoder.read_to_end(&mut bytes).map_err(|e| corrupt(path, offset, e.to_string()))?;
            parse_record(&mut bytes.as_slice(), path, offset)?
        } else {
            parse_record(&mut reader, path, offset)?
        };
        match record {
            Some(r) => out.push((offset, r)),
            None => break,
        }
    }
    Ok(out)
}

/// Ids of every record stored in `dir`; used to skip finished captures
/// when resuming.
pub fn existing_record_ids(dir: &Path) -> Result<HashSet<String>, WarcError> {
    let mut ids = HashSet::new();
    for path in warc_files(dir)? {
        for (_, record) in scan_file(&path)? {
            ids.insert(record.record_id);
        }
    }
    Ok(ids)
}

/// Location of every response record in `dir`, keyed by record id.
pub fn index_responses(dir: &Path) -> Result<Vec<WarcLocation>, WarcError> {
    let mut out = Vec::new();
    for path in warc_files(dir)? {
        for (offset, record) in scan_file(&path)? {
            if record.warc_type == "response" {
                out.push(WarcLocation { file: path.clone(), record_id: record.record_id, offset });
            }
        }
    }
    Ok(out)
}
