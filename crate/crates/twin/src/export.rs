//! CSV export of run traces, one file per trace kind.

use std::fs::File;
use std::path::{Path, PathBuf};

use crane_twin_core::{CraneState, Trace, TraceKind};

/// Column order of every exported file.
pub const CSV_HEADER: &str = "t,x,v,l,l_dot,theta,theta_dot,wind,magnet_on";

/// File name of one trace kind inside an export directory.
pub fn file_name(kind: TraceKind) -> String {
    format!("{}.csv", kind.as_str())
}

pub fn write_trace(path: &Path, trace: &Trace) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    if trace.samples.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for s in &trace.samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> csv::Result<Vec<CraneState>> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Writes each trace into `dir`, creating it if needed.
pub fn write_run(dir: &Path, traces: &[Trace]) -> csv::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for tr in traces {
        let path = dir.join(file_name(tr.kind));
        write_trace(&path, tr)?;
        paths.push(path);
    }
    Ok(paths)
}
