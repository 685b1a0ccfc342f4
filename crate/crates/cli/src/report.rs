use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use qrmms::Certificate;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: Vec<String>,
    /// SHA-256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub results: serde_json::Value,
    pub certificates: Vec<Certificate>,
    /// The only field allowed to differ between repeated runs.
    pub wall_time_ms: f64,
}

pub fn digest(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Files written next to the report.
#[derive(Default)]
pub struct Sidecars {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Sidecars {
    pub fn csv(&mut self, name: &str, header: &[String], rows: Vec<Vec<String>>) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(&r).expect("in-memory write");
        }
        self.files
            .push((name.into(), w.into_inner().expect("flush")));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut s = serde_json::to_vec_pretty(value).expect("serializable");
        s.push(b'\n');
        self.files.push((name.into(), s));
    }
}

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn emit(report: &Report, sidecars: Sidecars, out: Option<&PathBuf>) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("serializable");
    text.push('\n');
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.json"), &text)?;
            for (name, bytes) in sidecars.files {
                fs::write(dir.join(name), bytes)?;
            }
            eprintln!("wrote {}", dir.join("report.json").display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
