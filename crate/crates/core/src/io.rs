//! Output formats: CSV tables with a commented configuration echo, legacy
//! ASCII VTK and MatrixMarket. Every float is written with 17 significant
//! digits so identical runs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::analysis::{ErrorReport, InfSupRow};
use crate::assembly::Mu;
use crate::error::{Error, Result};
use crate::fespace::{FeFunction, Family};
use crate::hifi::FullOrderModel;
use crate::linalg::CsrMatrix;
use crate::rb::GreedyTrace;

pub const ERROR_HEADER: &str = "N,option,field,norm,mean_rel_err,max_rel_err,n_test,seed";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn echo_lines(out: &mut String, prefix: &str, echo: &[String]) {
    for line in echo {
        let _ = writeln!(out, "{prefix} {line}");
    }
}

/// CSV text: `# key = value` echo lines, the header, then the rows.
pub fn csv(echo: &[String], header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    echo_lines(&mut out, "#", echo);
    let _ = writeln!(out, "{header}");
    for r in rows {
        let _ = writeln!(out, "{r}");
    }
    out
}

pub fn error_csv(report: &ErrorReport, echo: &[String]) -> String {
    csv(
        echo,
        ERROR_HEADER,
        report.rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.option,
                r.field.name(),
                r.field.norm(),
                num(r.mean),
                num(r.max),
                r.n_test,
                r.seed
            )
        }),
    )
}

pub fn trace_csv(trace: &GreedyTrace, echo: &[String]) -> String {
    let mut e = echo.to_vec();
    e.push(format!("train_size = {}", trace.train_size));
    csv(
        &e,
        "iteration,mu1,mu2,max_indicator",
        trace
            .selected
            .iter()
            .zip(&trace.max_indicator)
            .enumerate()
            .map(|(i, (mu, v))| format!("{},{},{},{}", i + 1, num(mu[0]), num(mu[1]), num(*v))),
    )
}

pub fn infsup_csv(rows: &[InfSupRow], echo: &[String]) -> String {
    csv(
        echo,
        "mu1,mu2,option,beta,beta_modified",
        rows.iter().map(|r| format!("{},{},{},{},{}", num(r.mu[0]), num(r.mu[1]), r.option, num(r.beta), num(r.beta_modified))),
    )
}

/// `key = value` lines preceded by the echo.
pub fn key_values(echo: &[String], entries: &[(String, String)]) -> String {
    let mut out = String::new();
    echo_lines(&mut out, "#", echo);
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Legacy ASCII VTK of a velocity/pressure pair on the physical domain of
/// `mu`, sampled at mesh vertices (cell data for piecewise constant
/// pressure). The echo is folded into the title line, which legacy readers
/// cut at 256 characters.
pub fn vtk(fom: &FullOrderModel, mu: Mu, velocity: &FeFunction, pressure: &FeFunction, echo: &[String]) -> Result<String> {
    let mesh = &fom.mesh;
    if velocity.space.components != 2 || pressure.space.components != 1 {
        return Err(Error::DimensionMismatch("VTK output needs a vector velocity and a scalar pressure".into()));
    }
    let mut out = String::from("# vtk DataFile Version 3.0\n");
    let title: String = echo.iter().map(|l| l.replace(" = ", "=")).collect::<Vec<_>>().join("; ").chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(out, "{title}");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let nv = mesh.n_vertices();
    let _ = writeln!(out, "POINTS {nv} double");
    for v in 0..nv {
        let p = fom.geometry.to_physical(mu, mesh.vertices[v]);
        let _ = writeln!(out, "{} {} {}", num(p[0]), num(p[1]), num(0.0));
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    // vertex nodes come first in every continuous space
    let _ = writeln!(out, "POINT_DATA {nv}\nVECTORS velocity double");
    let vs = &velocity.space;
    for v in 0..nv {
        let _ = writeln!(
            out,
            "{} {} {}",
            num(velocity.coefficients[vs.dof(v, 0)]),
            num(velocity.coefficients[vs.dof(v, 1)]),
            num(0.0)
        );
    }
    let ps = &pressure.space;
    if ps.family == Family::P0 {
        let _ = writeln!(out, "CELL_DATA {nt}\nSCALARS pressure double 1\nLOOKUP_TABLE default");
        for k in 0..nt {
            let _ = writeln!(out, "{}", num(pressure.coefficients[ps.dof(k, 0)]));
        }
    } else {
        out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
        for v in 0..nv {
            let _ = writeln!(out, "{}", num(pressure.coefficients[ps.dof(v, 0)]));
        }
    }
    Ok(out)
}

/// MatrixMarket coordinate file of a sparse matrix.
pub fn matrix_market(m: &CsrMatrix, comments: &[String]) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    echo_lines(&mut out, "%", comments);
    let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz());
    let (ptr, idx, val) = (m.row_ptr(), m.col_idx(), m.values());
    for i in 0..m.nrows() {
        for k in ptr[i]..ptr[i + 1] {
            let _ = writeln!(out, "{} {} {}", i + 1, idx[k] + 1, num(val[k]));
        }
    }
    out
}

/// MatrixMarket array file of a dense matrix (column major).
pub fn matrix_market_dense(m: &DMatrix<f64>, comments: &[String]) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    echo_lines(&mut out, "%", comments);
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for v in m.iter() {
        let _ = writeln!(out, "{}", num(*v));
    }
    out
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{ErrorRow, Field, StageTiming};
    use crate::assembly::StabilizationConfig;
    use crate::hifi::{FePair, ProblemConfig};
    use crate::rb::RbOption;

    #[test]
    fn error_csv_layout() {
        let report = ErrorReport {
            rows: vec![ErrorRow { n: 4, option: RbOption::II, field: Field::Pressure, mean: 0.5, max: 1.0, n_test: 50, seed: 7 }],
            test_set: vec![],
            excluded: vec![],
            pointwise: vec![],
            timing: StageTiming::default(),
        };
        let text = error_csv(&report, &["seed = 7".to_string()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed = 7");
        assert_eq!(lines[1], ERROR_HEADER);
        assert_eq!(lines[2], "4,ii,pressure,L2,5.0000000000000000e-1,1.0000000000000000e0,50,7");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn vtk_counts_match_the_mesh() {
        for pair in [FePair::P2P1, FePair::P1P0] {
            let stab = if pair == FePair::P1P0 {
                StabilizationConfig::new(crate::assembly::StabilizationMethod::EdgeJumpP1P0, 0.05)
            } else {
                StabilizationConfig::none()
            };
            let fom = FullOrderModel::new(ProblemConfig { nx: 4, ny: 2, ..ProblemConfig::stokes_cavity(pair, stab) }).unwrap();
            let sol = fom.solve([0.5, 2.0]).unwrap();
            let u = FeFunction::new(fom.velocity.clone(), sol.total_velocity()).unwrap();
            let text = vtk(&fom, [0.5, 2.0], &u, &sol.pressure, &["seed = 1".into()]).unwrap();
            assert!(text.contains("POINTS 15 double"));
            assert!(text.contains("CELLS 16 64"));
            assert_eq!(text.lines().nth(1), Some("seed=1"));
            // the physical cavity at mu2 = 2 is 3 units long
            assert!(text.contains(&format!("{} {} {}", num(3.0), num(1.0), num(0.0))));
        }
    }

    #[test]
    fn matrix_market_lists_entries() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let text = matrix_market(&m, &[]);
        assert_eq!(text.lines().nth(1), Some("2 2 2"));
        assert_eq!(text.lines().nth(3), Some(format!("2 2 {}", num(2.0)).as_str()));
        let d = matrix_market_dense(&DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), &["x".into()]);
        assert_eq!(d.lines().nth(1), Some("% x"));
        assert_eq!(d.lines().count(), 5);
    }
}
