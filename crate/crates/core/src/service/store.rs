use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

const INDEX_FILE: &str = "index.jsonl";

/// Where one finished game's record line lives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub game_id: String,
    pub file: String,
    pub offset: u64,
    pub len: u64,
}

/// Append-only storage of finished games: one JSON Lines file per day
/// plus an index of byte ranges.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    index: BTreeMap<String, IndexEntry>,
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut index = BTreeMap::new();
        let path = dir.join(INDEX_FILE);
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from a crash is skipped; its record is
                // simply not indexed.
                if let Ok(e) = serde_json::from_str::<IndexEntry>(&line) {
                    index.insert(e.game_id.clone(), e);
                }
            }
        }
        Ok(Self { dir, index })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn contains(&self, game_id: &str) -> bool {
        self.index.contains_key(game_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Appends `line` (one JSON document, no newline) to today's file and
    /// indexes it.
    pub fn append(&mut self, game_id: &str, line: &str) -> std::io::Result<IndexEntry> {
        let file = format!("games-{}.jsonl", chrono::Utc::now().format("%Y-%m-%d"));
        let mut f = OpenOptions::new().create(true).append(true).open(self.dir.join(&file))?;
        let offset = f.seek(SeekFrom::End(0))?;
        f.write_all(line.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_data()?;
        let entry = IndexEntry {
            game_id: game_id.to_string(),
            file,
            offset,
            len: line.len() as u64,
        };
        let mut idx = OpenOptions::new().create(true).append(true).open(self.dir.join(INDEX_FILE))?;
        writeln!(idx, "{}", serde_json::to_string(&entry).expect("index entry serializes"))?;
        idx.sync_data()?;
        self.index.insert(entry.game_id.clone(), entry.clone());
        Ok(entry)
    }

    pub fn read(&self, game_id: &str) -> std::io::Result<Option<String>> {
        let Some(e) = self.index.get(game_id) else {
            return Ok(None);
        };
        let mut f = File::open(self.dir.join(&e.file))?;
        f.seek(SeekFrom::Start(e.offset))?;
        let mut buf = vec![0; e.len as usize];
        f.read_exact(&mut buf)?;
        String::from_utf8(buf)
            .map(Some)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
