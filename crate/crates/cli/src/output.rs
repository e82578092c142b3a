//! Atomic file emission and the run summary table.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nerfsim_core::perfmodel::Bound;
use nerfsim_core::profile::{Dataflow, ProfileReport};
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

/// Writes through a temp file in the target directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// One profiled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub dataflow: Dataflow,
    pub views: usize,
    pub seed: u64,
    pub total_cycles: u64,
    pub fps: f64,
    pub utilization: f64,
    pub exposed_share: f64,
    pub mflops_per_pixel: f64,
    pub bound: Bound,
}

impl SummaryRow {
    pub fn new(config_hash: &str, views: usize, seed: u64, r: &ProfileReport) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            dataflow: r.dataflow,
            views,
            seed,
            total_cycles: r.trace.total_cycles,
            fps: r.fps,
            utilization: r.trace.utilization,
            exposed_share: r.trace.exposed_share(),
            mflops_per_pixel: r.flops.mflops_per_pixel(),
            bound: r.trace.bound,
        }
    }
}

pub fn write_csv_rows(rows: &[SummaryRow], w: impl Write) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(io::Error::other)?;
    }
    out.flush()
}

pub fn read_csv_rows(r: impl io::Read) -> io::Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>().map_err(io::Error::other)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> io::Result<()> {
    write_atomic(path, |w| write_csv_rows(rows, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, |w| w.write_all(b"one")).unwrap();
        write_atomic(&p, |w| w.write_all(b"two")).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn failed_write_leaves_old_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, |w| w.write_all(b"keep")).unwrap();
        assert!(write_atomic(&p, |_| Err(io::Error::other("boom"))).is_err());
        assert_eq!(fs::read_to_string(&p).unwrap(), "keep");
    }
}
