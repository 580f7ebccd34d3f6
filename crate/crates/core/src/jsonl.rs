//! Newline-delimited JSON helpers shared by the stage handoff files.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Opens a JSONL file, transparently decompressing `.gz` files.
pub fn open_lines(path: &Path) -> Result<Box<dyn BufRead>, JsonlError> {
    let file = File::open(path).map_err(|source| JsonlError::Io { path: path.to_path_buf(), source })?;
    let reader: Box<dyn Read> =
        if path.extension().is_some_and(|e| e == "gz") { Box::new(MultiGzDecoder::new(file)) } else { Box::new(file) };
    Ok(Box::new(BufReader::new(reader)))
}

/// Iterates over the records of a JSONL file, skipping blank lines.
pub fn read_records<T: DeserializeOwned>(
    path: &Path,
) -> Result<impl Iterator<Item = Result<T, JsonlError>>, JsonlError> {
    let reader = open_lines(path)?;
    let path = path.to_path_buf();
    Ok(reader.lines().enumerate().filter_map(move |(idx, line)| match line {
        Err(source) => Some(Err(JsonlError::Io { path: path.clone(), source })),
        Ok(line) if line.trim().is_empty() => None,
        Ok(line) => Some(serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: path.clone(),
            line: idx + 1,
            source,
        })),
    }))
}

pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    read_records(path)?.collect()
}

/// Buffered writer emitting one compact JSON object per line.
pub struct JsonlWriter<W: Write> {
    inner: W,
    count: u64,
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, count: 0 }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.inner, record)?;
        self.inner.write_all(b"\n")?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_all<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> io::Result<u64> {
    let mut writer = JsonlWriter::create(path)?;
    for record in records {
        writer.write(&record)?;
    }
    let count = writer.count();
    writer.finish()?;
    Ok(count)
}
