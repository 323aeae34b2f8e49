//! Trajectory CSV, snapshot text, JSON-lines diagnostics and summary files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use freecongest::diagnostics::DiagnosticRecord;
use freecongest::format_number;
use freecongest::freeboundary::{assemble_solution, Trajectory};
use freecongest::{Grid, PhysicalParams};

pub const TRAJECTORY_HEADER: &str = "t,xtilde,xtilde_dot,p_s,l2_v_err,h1_v_err,l2_u_err,beta_h1_running";

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, params: &PhysicalParams) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    let running = traj.path.running_beta_h1(params);
    for (k, r) in traj.records.iter().enumerate() {
        let row = [
            r.t,
            traj.path.y()[k],
            traj.path.ydot()[k],
            traj.p_s[k],
            r.l2_v_err,
            r.h1_v_err,
            r.l2_u_err,
            running[k],
        ];
        let cells: Vec<String> = row.iter().map(|&x| format_number(x)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// One `x v u w p` file per stored snapshot, on the full line around `x̃`.
pub fn write_snapshots(
    dir: &Path,
    label: &str,
    traj: &Trajectory,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::with_capacity(traj.snapshots.len());
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let full = assemble_solution(traj, grid, params, i)?;
        let path = dir.join(format!("{label}_{:06}.txt", snap.step));
        let mut out = create(&path)?;
        writeln!(out, "# t = {}, xtilde = {}", format_number(full.t), format_number(full.xtilde))?;
        writeln!(out, "x v u w p")?;
        for j in 0..full.x.len() {
            writeln!(
                out,
                "{} {} {} {} {}",
                format_number(full.x[j]),
                format_number(full.v[j]),
                format_number(full.u[j]),
                format_number(full.w[j]),
                format_number(full.p[j])
            )?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// JSON-lines sink for diagnostic records.
pub struct DiagnosticLog {
    out: BufWriter<File>,
    pub count: usize,
    pub failed: usize,
}

impl DiagnosticLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: create(path)?, count: 0, failed: 0 })
    }

    pub fn push(&mut self, record: &DiagnosticRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.count += 1;
        self.failed += usize::from(!record.pass);
        Ok(())
    }

    pub fn finish(mut self) -> Result<(usize, usize)> {
        self.out.flush()?;
        Ok((self.count, self.failed))
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
