//! In-memory collection of run artifacts and their staged commit to disk.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub artifact_version: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: Option<u64>,
    pub outputs: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
    pub outputs: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    timings: BTreeMap<String, f64>,
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

impl Artifacts {
    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(&r).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        self.files.insert(format!("{name}.csv"), bytes);
    }

    pub fn plot<T: Serialize>(&mut self, name: &str, records: &T) {
        let mut bytes = serde_json::to_vec_pretty(records).expect("plot data serializes");
        bytes.push(b'\n');
        self.files.insert(format!("plotdata_{name}.json"), bytes);
    }

    pub fn output<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("output serializes");
        self.outputs.insert(key.to_string(), v);
    }

    pub fn check(&mut self, name: &str, passed: bool, value: Option<f64>, threshold: Option<f64>, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            value,
            threshold,
            detail: detail.into(),
        });
    }

    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        *self.timings.entry(label.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Adds `report.json` and `timings.json`, then commits every file.
    pub fn finish(mut self, record: &RunRecord, out: &Path) -> io::Result<Vec<PathBuf>> {
        let mut report = serde_json::to_vec_pretty(record).map_err(io::Error::other)?;
        report.push(b'\n');
        self.files.insert("report.json".into(), report);
        let mut checks = csv::Writer::from_writer(Vec::new());
        checks.write_record(["name", "passed", "value", "threshold", "detail"])?;
        for c in &record.checks {
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            checks.write_record([
                c.name.clone(),
                c.passed.to_string(),
                opt(c.value),
                opt(c.threshold),
                c.detail.clone(),
            ])?;
        }
        self.files
            .insert("checks.csv".into(), checks.into_inner().map_err(|e| e.into_error())?);
        let mut timings = serde_json::to_vec_pretty(&self.timings).map_err(io::Error::other)?;
        timings.push(b'\n');
        self.files.insert("timings.json".into(), timings);
        commit(out, &self.files)
    }
}

/// Writes into a staging directory beside the targets and renames into
/// place; on any failure everything staged or moved is removed.
pub fn commit(out: &Path, files: &BTreeMap<String, Vec<u8>>) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let staging = out.join(format!(".projq-staging-{}", std::process::id()));
    let mut moved = Vec::new();
    let result = (|| {
        fs::create_dir_all(&staging)?;
        for (name, bytes) in files {
            fs::write(staging.join(name), bytes)?;
        }
        for name in files.keys() {
            let target = out.join(name);
            fs::rename(staging.join(name), &target)?;
            moved.push(target);
        }
        Ok(())
    })();
    let _ = fs::remove_dir_all(&staging);
    match result {
        Ok(()) => Ok(moved),
        Err(e) => {
            for p in &moved {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut files = BTreeMap::new();
        files.insert("a.csv".to_string(), b"x\n".to_vec());
        files.insert("b.json".to_string(), b"{}".to_vec());
        let written = commit(dir.path(), &files).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"x\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 2);
    }

    #[test]
    fn failed_commit_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        // a directory in the way makes the second rename fail
        fs::create_dir(dir.path().join("b.csv")).unwrap();
        fs::write(dir.path().join("b.csv").join("keep"), b"").unwrap();
        let mut files = BTreeMap::new();
        files.insert("a.csv".to_string(), b"1".to_vec());
        files.insert("b.csv".to_string(), b"2".to_vec());
        assert!(commit(dir.path(), &files).is_err());
        assert!(!dir.path().join("a.csv").exists());
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["b.csv".to_string()]);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1e-300, -2.5e17, 1.0 / 3.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
