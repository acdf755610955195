//! Plain-text storage of a [`ReducedModel`]: `key = value` header lines, a
//! blank line, then every array as `name rows cols` followed by its entries
//! row by row. Floats carry 17 significant digits, so a round trip is exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::model::{AffineDense, RbOption, ReducedBases, ReducedBlocks, ReducedModel, ReducedTensor};
use crate::assembly::{Problem, StabilizationConfig, StabilizationMethod, Theta};
use crate::error::{Error, Result};
use crate::hifi::{Equation, FePair, ParameterBox, ProblemConfig};
use crate::mesh::Diagonal;

const MAGIC: &str = "rbstab-reduced-model 1";
const BLOCKS: [&str; 4] = ["uu", "up", "pu", "pp"];
const PARTS: [&str; 2] = ["plain", "stabilization"];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn blocks(b: &ReducedBlocks) -> [&AffineDense; 4] {
    [&b.uu, &b.up, &b.pu, &b.pp]
}

fn equation_name(e: Equation) -> &'static str {
    match e {
        Equation::Momentum => "momentum",
        Equation::Mass => "mass",
    }
}

struct Writer {
    header: String,
    arrays: String,
}

impl Writer {
    fn key(&mut self, k: &str, v: impl std::fmt::Display) {
        let _ = writeln!(self.header, "{k} = {v}");
    }

    fn theta(&mut self, k: &str, t: &Theta) {
        self.key(k, format!("{} {} {}", num(t.coeff), t.nu_pow, t.a_pow));
    }

    fn array(&mut self, name: &str, m: &DMatrix<f64>) {
        let _ = writeln!(self.arrays, "{name} {} {}", m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| num(m[(i, j)])).collect();
            let _ = writeln!(self.arrays, "{}", row.join(" "));
        }
    }

    fn rows(&mut self, name: &str, rows: &[Vec<f64>], len: usize) {
        let m = DMatrix::from_fn(rows.len(), len, |i, j| rows[i][j]);
        self.array(name, &m);
    }
}

impl ReducedModel {
    pub fn to_text(&self) -> String {
        let mut w = Writer { header: format!("{MAGIC}\n"), arrays: String::new() };
        let c = &self.config;
        let b = &self.bases;
        w.key("problem", c.problem.name());
        w.key("fe_pair", c.fe_pair.name());
        w.key("method", c.stabilization.method.name());
        w.key("rho", c.stabilization.method.rho());
        w.key("delta", num(c.stabilization.delta));
        w.key("apply_online", c.stabilization.apply_online);
        w.key("option", self.option);
        w.key("n", self.n());
        w.key("n_u", b.n_u());
        w.key("n_s", b.n_s());
        w.key("n_p", b.n_p());
        w.key("velocity_dofs", b.lifting.len());
        w.key("pressure_dofs", b.pressure_len);
        w.key("dropped", format!("{} {} {}", b.dropped[0], b.dropped[1], b.dropped[2]));
        w.key("mu2_ref", num(c.mu2_ref));
        w.key("mu1_range", format!("{} {}", num(c.parameter_box.mu1[0]), num(c.parameter_box.mu1[1])));
        w.key("mu2_range", format!("{} {}", num(c.parameter_box.mu2[0]), num(c.parameter_box.mu2[1])));
        w.key("nx", c.nx);
        w.key("ny", c.ny);
        w.key("diagonal", c.diagonal.name());
        w.key("lid_speed", num(c.lid_speed));
        w.key("seed", self.seed);

        let params = DMatrix::from_fn(self.parameters.len(), 2, |i, j| self.parameters[i][j]);
        w.array("parameters", &params);
        w.rows("lifting", std::slice::from_ref(&b.lifting), b.lifting.len());
        w.rows("velocity", &b.velocity, b.lifting.len());
        w.rows("supremizer", &b.supremizer, b.lifting.len());
        w.rows("pressure", &b.pressure, b.pressure_len);
        w.array("xu", &self.xu);
        w.array("xp", &self.xp);
        for (part, blk) in PARTS.iter().zip([&self.plain, &self.stabilization]) {
            for (name, terms) in BLOCKS.iter().zip(blocks(blk)) {
                w.key(&format!("q.{part}.{name}"), terms.len());
                for (q, (theta, m)) in terms.iter().enumerate() {
                    w.theta(&format!("theta.{part}.{name}.{q}"), theta);
                    w.array(&format!("{part}.{name}.{q}"), m);
                }
            }
            w.key(&format!("nonlinear.{part}"), blk.nonlinear.len());
            for (t, tensor) in blk.nonlinear.iter().enumerate() {
                w.key(&format!("nonlinear.{part}.{t}.equation"), equation_name(tensor.equation));
                w.key(&format!("q.{part}.nonlinear.{t}"), tensor.terms.len());
                for (q, (theta, slices)) in tensor.terms.iter().enumerate() {
                    w.theta(&format!("theta.{part}.nonlinear.{t}.{q}"), theta);
                    w.key(&format!("slices.{part}.nonlinear.{t}.{q}"), slices.len());
                    for (j, m) in slices.iter().enumerate() {
                        w.array(&format!("{part}.nonlinear.{t}.{q}.{j}"), m);
                    }
                }
            }
        }
        format!("{}\n{}", w.header, w.arrays)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = text
            .split_once("\n\n")
            .ok_or_else(|| Error::Parse("missing blank line between header and arrays".into()))?;
        let mut lines = head.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::Parse(format!("not a reduced model file (expected `{MAGIC}`)")));
        }
        let mut header = HashMap::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header line `{line}`")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        }
        let h = Header(header);
        let arrays = parse_arrays(body)?;
        let a = |name: &str| -> Result<&DMatrix<f64>> {
            arrays.get(name).ok_or_else(|| Error::Parse(format!("missing array `{name}`")))
        };

        let rho: i32 = h.parse("rho")?;
        let config = ProblemConfig {
            problem: Problem::parse(h.get("problem")?)?,
            fe_pair: FePair::parse(h.get("fe_pair")?)?,
            stabilization: StabilizationConfig {
                method: StabilizationMethod::parse(h.get("method")?, rho)?,
                delta: h.parse("delta")?,
                apply_online: h.parse("apply_online")?,
            },
            parameter_box: ParameterBox::new(h.pair("mu1_range")?, h.pair("mu2_range")?),
            nx: h.parse("nx")?,
            ny: h.parse("ny")?,
            diagonal: Diagonal::parse(h.get("diagonal")?)?,
            mu2_ref: h.parse("mu2_ref")?,
            lid_speed: h.parse("lid_speed")?,
        };
        config.validate()?;

        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let dropped: Vec<usize> = h.list("dropped")?;
        if dropped.len() != 3 {
            return Err(Error::Parse("`dropped` needs three counts".into()));
        }
        let lifting = rows(a("lifting")?).pop().unwrap_or_default();
        let bases = ReducedBases {
            lifting,
            velocity: rows(a("velocity")?),
            supremizer: rows(a("supremizer")?),
            pressure: rows(a("pressure")?),
            pressure_len: h.parse("pressure_dofs")?,
            dropped: [dropped[0], dropped[1], dropped[2]],
        };
        let expect = |key: &str, value: usize| -> Result<()> {
            let stored: usize = h.parse(key)?;
            if stored != value {
                return Err(Error::Parse(format!("`{key}` says {stored} but the arrays hold {value}")));
            }
            Ok(())
        };
        expect("n_u", bases.n_u())?;
        expect("n_s", bases.n_s())?;
        expect("n_p", bases.n_p())?;
        expect("velocity_dofs", bases.lifting.len())?;

        let params = a("parameters")?;
        let parameters: Vec<[f64; 2]> = (0..params.nrows()).map(|i| [params[(i, 0)], params[(i, 1)]]).collect();
        expect("n", parameters.len())?;

        let mut parts = Vec::with_capacity(2);
        for part in PARTS {
            let mut dense: Vec<AffineDense> = Vec::with_capacity(4);
            for name in BLOCKS {
                let q: usize = h.parse(&format!("q.{part}.{name}"))?;
                let mut terms = Vec::with_capacity(q);
                for i in 0..q {
                    terms.push((h.theta(&format!("theta.{part}.{name}.{i}"))?, a(&format!("{part}.{name}.{i}"))?.clone()));
                }
                dense.push(terms);
            }
            let count: usize = h.parse(&format!("nonlinear.{part}"))?;
            let mut nonlinear = Vec::with_capacity(count);
            for t in 0..count {
                let equation = match h.get(&format!("nonlinear.{part}.{t}.equation"))? {
                    "momentum" => Equation::Momentum,
                    "mass" => Equation::Mass,
                    other => return Err(Error::Parse(format!("unknown equation `{other}`"))),
                };
                let q: usize = h.parse(&format!("q.{part}.nonlinear.{t}"))?;
                let mut terms = Vec::with_capacity(q);
                for i in 0..q {
                    let theta = h.theta(&format!("theta.{part}.nonlinear.{t}.{i}"))?;
                    let ns: usize = h.parse(&format!("slices.{part}.nonlinear.{t}.{i}"))?;
                    let slices = (0..ns)
                        .map(|j| a(&format!("{part}.nonlinear.{t}.{i}.{j}")).cloned())
                        .collect::<Result<Vec<_>>>()?;
                    terms.push((theta, slices));
                }
                nonlinear.push(ReducedTensor { equation, terms });
            }
            let mut it = dense.into_iter();
            parts.push(ReducedBlocks {
                uu: it.next().unwrap(),
                up: it.next().unwrap(),
                pu: it.next().unwrap(),
                pp: it.next().unwrap(),
                nonlinear,
            });
        }
        let stabilization = parts.pop().unwrap();
        let plain = parts.pop().unwrap();
        Ok(ReducedModel {
            config,
            option: RbOption::parse(h.get("option")?)?,
            seed: h.parse("seed")?,
            parameters,
            bases,
            plain,
            stabilization,
            xu: a("xu")?.clone(),
            xp: a("xp")?.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

struct Header(HashMap<String, String>);

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| Error::Parse(format!("missing header key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get(key)?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad entry `{t}` in `{key}`"))))
            .collect()
    }

    fn pair(&self, key: &str) -> Result<[f64; 2]> {
        match self.list::<f64>(key)?.as_slice() {
            [a, b] => Ok([*a, *b]),
            _ => Err(Error::Parse(format!("`{key}` needs two values"))),
        }
    }

    fn theta(&self, key: &str) -> Result<Theta> {
        let parts: Vec<&str> = self.get(key)?.split_whitespace().collect();
        let bad = || Error::Parse(format!("bad coefficient `{key}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Theta::new(
            parts[0].parse().map_err(|_| bad())?,
            parts[1].parse().map_err(|_| bad())?,
            parts[2].parse().map_err(|_| bad())?,
        ))
    }
}

fn parse_arrays(body: &str) -> Result<HashMap<String, DMatrix<f64>>> {
    let mut out = HashMap::new();
    let mut tokens = body.split_ascii_whitespace();
    while let Some(name) = tokens.next() {
        let mut dim = || -> Result<usize> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad dimensions for array `{name}`")))
        };
        let (r, c) = (dim()?, dim()?);
        let mut values = Vec::with_capacity(r * c);
        for _ in 0..r * c {
            let t = tokens.next().ok_or_else(|| Error::Parse(format!("array `{name}` is truncated")))?;
            values.push(t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}` in `{name}`")))?);
        }
        out.insert(name.to_string(), DMatrix::from_row_slice(r, c, &values));
    }
    Ok(out)
}
