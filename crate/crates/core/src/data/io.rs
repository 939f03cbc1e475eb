//! Reading and writing weak-label datasets.
//!
//! Both formats keep one file per split inside a directory, plus a
//! `label.json` object mapping class index to class name:
//!
//! * `wrench-json`: `train.json`, `valid.json` (or `dev.json`), `test.json`,
//!   each an object keyed by sample id whose values carry `label`,
//!   `weak_labels` and `data.text`.
//! * `jsonl`: `train.jsonl`, `dev.jsonl` (or `valid.jsonl`), `test.jsonl`,
//!   one object per line with `text`, optional `label`, `weak_labels` and
//!   optional `id`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Sample, Split, SplitName, SplitSet, ABSTAIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DataFormat {
    #[default]
    #[serde(rename = "wrench-json")]
    WrenchJson,
    #[serde(rename = "jsonl")]
    Jsonl,
}

impl DataFormat {
    fn split_files(self, split: SplitName) -> &'static [&'static str] {
        match (self, split) {
            (DataFormat::WrenchJson, SplitName::Train) => &["train.json"],
            (DataFormat::WrenchJson, SplitName::Dev) => &["valid.json", "dev.json"],
            (DataFormat::WrenchJson, SplitName::Test) => &["test.json"],
            (DataFormat::Jsonl, SplitName::Train) => &["train.jsonl"],
            (DataFormat::Jsonl, SplitName::Dev) => &["dev.jsonl", "valid.jsonl"],
            (DataFormat::Jsonl, SplitName::Test) => &["test.jsonl"],
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wrench-json" | "wrench" => Ok(DataFormat::WrenchJson),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::Config(format!("unknown data format `{other}` (expected wrench-json or jsonl)"))),
        }
    }
}

#[derive(Deserialize, Serialize)]
struct WrenchEntry {
    label: Option<i64>,
    weak_labels: Vec<i64>,
    data: WrenchData,
}

#[derive(Deserialize, Serialize)]
struct WrenchData {
    text: String,
}

#[derive(Deserialize, Serialize)]
struct JsonlEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    text: String,
    #[serde(default)]
    label: Option<i64>,
    weak_labels: Vec<i64>,
}

/// A parsed row before cross-split validation.
struct RawRow {
    location: String,
    sample: Sample,
    weak: Vec<i64>,
}

pub fn load_dataset(dir: &Path, format: DataFormat) -> Result<SplitSet> {
    let class_names = read_label_names(&dir.join("label.json"))?;
    let c = class_names.len();
    let mut num_lfs: Option<usize> = None;
    let mut splits: [Split; 3] = Default::default();

    for name in SplitName::ALL {
        let Some(path) = find_split_file(dir, format, name) else {
            if name == SplitName::Train {
                return Err(Error::Data(format!("no train split found in {}", dir.display())));
            }
            continue;
        };
        let rows = match format {
            DataFormat::WrenchJson => read_wrench_split(&path)?,
            DataFormat::Jsonl => read_jsonl_split(&path)?,
        };
        let split = &mut splits[name.index()];
        for row in rows {
            let width = *num_lfs.get_or_insert(row.weak.len());
            if row.weak.len() != width {
                return Err(Error::parse(
                    &path,
                    &row.location,
                    format!("inconsistent LF count: {} weak labels, expected {width}", row.weak.len()),
                ));
            }
            if let Some(&bad) = row.weak.iter().find(|&&v| v != ABSTAIN && (v < 0 || v as usize >= c)) {
                return Err(Error::parse(
                    &path,
                    &row.location,
                    format!("class index out of range: weak label {bad} with {c} classes"),
                ));
            }
            if let Some(g) = row.sample.gold_label {
                if g >= c {
                    return Err(Error::parse(
                        &path,
                        &row.location,
                        format!("class index out of range: label {g} with {c} classes"),
                    ));
                }
            }
            split.samples.push(row.sample);
            split.weak_labels.push(row.weak);
        }
    }

    let [train, dev, test] = splits;
    let set = SplitSet {
        train,
        dev,
        test,
        class_names,
        num_lfs: num_lfs.unwrap_or(0),
    };
    set.validate()?;
    Ok(set)
}

fn find_split_file(dir: &Path, format: DataFormat, split: SplitName) -> Option<PathBuf> {
    format
        .split_files(split)
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

fn read_label_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, String> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, format!("line {}", e.line()), e))?;
    let mut indexed = Vec::with_capacity(map.len());
    for (k, v) in map {
        let idx: usize = k
            .parse()
            .map_err(|_| Error::parse(path, format!("key {k:?}"), "class keys must be integers"))?;
        indexed.push((idx, v));
    }
    indexed.sort();
    for (expected, (idx, _)) in indexed.iter().enumerate() {
        if *idx != expected {
            return Err(Error::parse(path, format!("key {idx}"), "class indices must be contiguous from 0"));
        }
    }
    if indexed.is_empty() {
        return Err(Error::parse(path, "line 1", "no classes defined"));
    }
    Ok(indexed.into_iter().map(|(_, v)| v).collect())
}

fn gold_from(label: Option<i64>, path: &Path, location: &str) -> Result<Option<usize>> {
    match label {
        None => Ok(None),
        Some(v) if v < 0 => Err(Error::parse(path, location, format!("class index out of range: label {v}"))),
        Some(v) => Ok(Some(v as usize)),
    }
}

fn read_wrench_split(path: &Path) -> Result<Vec<RawRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, WrenchEntry> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, format!("line {}", e.line()), e))?;
    let mut rows = Vec::with_capacity(map.len());
    for (key, entry) in map {
        let location = format!("sample {key}");
        let id: u64 = key
            .parse()
            .map_err(|_| Error::parse(path, &location, "sample keys must be non-negative integers"))?;
        rows.push(RawRow {
            sample: Sample {
                id,
                text: entry.data.text,
                gold_label: gold_from(entry.label, path, &location)?,
            },
            weak: entry.weak_labels,
            location,
        });
    }
    rows.sort_by_key(|r| r.sample.id);
    Ok(rows)
}

fn read_jsonl_split(path: &Path) -> Result<Vec<RawRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("line {}", idx + 1);
        let entry: JsonlEntry = serde_json::from_str(&line).map_err(|e| Error::parse(path, &location, e))?;
        rows.push(RawRow {
            sample: Sample {
                id: entry.id.unwrap_or(rows.len() as u64),
                text: entry.text,
                gold_label: gold_from(entry.label, path, &location)?,
            },
            weak: entry.weak_labels,
            location,
        });
    }
    Ok(rows)
}

/// Writes `set` into `dir` (created if missing). Empty dev/test splits are skipped.
pub fn save_dataset(set: &SplitSet, dir: &Path, format: DataFormat) -> Result<()> {
    set.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let labels: BTreeMap<String, &String> = set
        .class_names
        .iter()
        .enumerate()
        .map(|(k, name)| (k.to_string(), name))
        .collect();
    write_json(&dir.join("label.json"), &labels)?;

    for name in SplitName::ALL {
        let split = set.split(name);
        if split.is_empty() && name != SplitName::Train {
            continue;
        }
        let path = dir.join(format.split_files(name)[0]);
        match format {
            DataFormat::WrenchJson => {
                let map: BTreeMap<String, WrenchEntry> = split
                    .samples
                    .iter()
                    .zip(&split.weak_labels)
                    .map(|(s, weak)| {
                        (
                            s.id.to_string(),
                            WrenchEntry {
                                label: s.gold_label.map(|g| g as i64),
                                weak_labels: weak.clone(),
                                data: WrenchData { text: s.text.clone() },
                            },
                        )
                    })
                    .collect();
                write_json(&path, &map)?;
            }
            DataFormat::Jsonl => {
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut w = BufWriter::new(file);
                for (s, weak) in split.samples.iter().zip(&split.weak_labels) {
                    let entry = JsonlEntry {
                        id: Some(s.id),
                        text: s.text.clone(),
                        label: s.gold_label.map(|g| g as i64),
                        weak_labels: weak.clone(),
                    };
                    serde_json::to_writer(&mut w, &entry).map_err(|e| Error::Data(e.to_string()))?;
                    w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
