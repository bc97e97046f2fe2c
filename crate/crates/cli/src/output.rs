//! Trajectory CSV and report writers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use homolab::{AngularMomentum, TrajectoryF64};

use crate::CliError;

/// Destination for a command's main output: a file, or standard output.
pub enum Sink {
    File(PathBuf, BufWriter<File>),
    Stdout(io::StdoutLock<'static>),
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let f = File::create(p).map_err(|e| CliError::io(p, e))?;
                Ok(Sink::File(p.to_path_buf(), BufWriter::new(f)))
            }
            None => Ok(Sink::Stdout(io::stdout().lock())),
        }
    }

    fn describe(&self) -> PathBuf {
        match self {
            Sink::File(p, _) => p.clone(),
            Sink::Stdout(_) => PathBuf::from("<stdout>"),
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        let path = self.describe();
        self.flush().map_err(|e| CliError::io(&path, e))
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::File(_, w) => w.write(buf),
            Sink::Stdout(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::File(_, w) => w.flush(),
            Sink::Stdout(w) => w.flush(),
        }
    }
}

pub fn csv_header(n: usize, dim: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for k in 0..n {
        header.extend((0..dim).map(|c| format!("q{k}_{c}")));
        header.extend((0..dim).map(|c| format!("qdot{k}_{c}")));
    }
    header.extend(["I", "U", "measure", "E", "P", "L"].map(String::from));
    header
}

/// One row per sample: `t`, per body its position then velocity, then
/// `I, U, I^alpha U, E, |P|, L`. `L` is the planar scalar, the vector norm in
/// three dimensions, and empty otherwise.
pub fn write_trajectory_csv<W: Write>(traj: &TrajectoryF64, out: W) -> csv::Result<()> {
    let n = traj.system.n();
    let dim = traj.system.dim();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(n, dim))?;
    let mut row: Vec<String> = Vec::with_capacity(1 + 2 * n * dim + 6);
    for (s, d) in traj.samples.iter().zip(&traj.diagnostics) {
        row.clear();
        row.push(s.t.to_string());
        for k in 0..n {
            row.extend(s.position(k).iter().map(f64::to_string));
            row.extend(s.velocity(k).iter().map(f64::to_string));
        }
        let p = d.linear_momentum.iter().map(|x| x * x).sum::<f64>().sqrt();
        let l = match d.angular_momentum {
            Some(AngularMomentum::Planar(l)) => l.to_string(),
            Some(AngularMomentum::Spatial(v)) => v.iter().map(|x| x * x).sum::<f64>().sqrt().to_string(),
            None => String::new(),
        };
        row.extend([d.inertia, d.potential, d.measure, d.energy, p].map(|x| x.to_string()));
        row.push(l);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_order() {
        assert_eq!(
            csv_header(2, 2).join(","),
            "t,q0_0,q0_1,qdot0_0,qdot0_1,q1_0,q1_1,qdot1_0,qdot1_1,I,U,measure,E,P,L"
        );
    }
}
