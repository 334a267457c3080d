//! Text format for MDP descriptions.
//!
//! ```text
//! # comments start with '#'
//! [states]
//! 2
//! [actions]
//! 1
//! [beta]
//! 1 0
//! [P]
//! 0 0 : 0 1        # s a : next-state distribution
//! 1 0 : 0 1
//! [Z]
//! 0 0 : 1 0        # s a : mean measurement
//! 1 0 : 0 1
//! [gamma]
//! 0.5
//! [bound]
//! 1
//! [noise]          # optional: s a : p z.. ; p z.. ; ...
//! 0 0 : 0.5 2 0 ; 0.5 0 0
//! ```
//!
//! Every `(s, a)` pair must appear exactly once in `[P]` and `[Z]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{NoiseOutcome, VectorMdp};
use crate::{Error, Result};

const SECTIONS: [&str; 8] = [
    "states", "actions", "beta", "P", "Z", "gamma", "bound", "noise",
];

struct Parser<'a> {
    origin: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn numbers(&self, line: usize, text: &str) -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.err(line, format!("bad number `{t}`")))
            })
            .collect()
    }

    fn pair(&self, line: usize, text: &str, ns: usize, na: usize) -> Result<(usize, usize)> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(self.err(line, "expected `state action` before ':'"));
        }
        let s: usize = parts[0]
            .parse()
            .map_err(|_| self.err(line, "bad state index"))?;
        let a: usize = parts[1]
            .parse()
            .map_err(|_| self.err(line, "bad action index"))?;
        if s >= ns || a >= na {
            return Err(self.err(line, format!("pair ({s}, {a}) out of range")));
        }
        Ok((s, a))
    }
}

/// Parses an MDP description. `origin` names the source in error messages.
pub fn parse_mdp(text: &str, origin: &str) -> Result<VectorMdp> {
    let p = Parser { origin };
    let mut sections: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    let mut header_line: BTreeMap<&str, usize> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = SECTIONS
                .iter()
                .find(|s| **s == name.trim())
                .ok_or_else(|| p.err(lineno, format!("unknown section [{name}]")))?;
            if header_line.insert(name, lineno).is_some() {
                return Err(p.err(lineno, format!("duplicate section [{name}]")));
            }
            sections.entry(name).or_default();
            current = Some(name);
            continue;
        }
        let sec = current.ok_or_else(|| p.err(lineno, "content before first section"))?;
        sections.get_mut(sec).unwrap().push((lineno, line));
    }

    let scalar = |name: &str| -> Result<(usize, f64)> {
        let rows = sections
            .get(name)
            .ok_or_else(|| p.err(0, format!("missing section [{name}]")))?;
        match rows.as_slice() {
            [(l, t)] => {
                let v = p.numbers(*l, t)?;
                if v.len() != 1 {
                    return Err(p.err(*l, format!("[{name}] expects one value")));
                }
                Ok((*l, v[0]))
            }
            _ => Err(p.err(
                header_line[name],
                format!("[{name}] expects exactly one line"),
            )),
        }
    };
    let count = |name: &str| -> Result<usize> {
        let (l, v) = scalar(name)?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(p.err(l, format!("[{name}] must be a positive integer")));
        }
        Ok(v as usize)
    };

    let ns = count("states")?;
    let na = count("actions")?;
    let (gamma_line, gamma) = scalar("gamma")?;
    let bound = scalar("bound")?.1;

    let beta_rows = sections
        .get("beta")
        .ok_or_else(|| p.err(0, "missing section [beta]"))?;
    let mut beta = Vec::new();
    for (l, t) in beta_rows {
        beta.extend(p.numbers(*l, t)?);
    }
    if beta.len() != ns {
        return Err(p.err(
            header_line["beta"],
            format!("[beta] has {} entries, expected {ns}", beta.len()),
        ));
    }

    let table = |name: &str, width: Option<usize>| -> Result<Vec<Vec<Vec<f64>>>> {
        let rows = sections
            .get(name)
            .ok_or_else(|| p.err(0, format!("missing section [{name}]")))?;
        let mut out: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; na]; ns];
        let mut dim = width;
        for (l, t) in rows {
            let (lhs, rhs) = t
                .split_once(':')
                .ok_or_else(|| p.err(*l, "expected `s a : values`"))?;
            let (s, a) = p.pair(*l, lhs, ns, na)?;
            let v = p.numbers(*l, rhs)?;
            match dim {
                Some(d) if d != v.len() => {
                    return Err(p.err(*l, format!("expected {d} values, found {}", v.len())))
                }
                None => dim = Some(v.len()),
                _ => {}
            }
            if out[s][a].replace(v).is_some() {
                return Err(p.err(*l, format!("pair ({s}, {a}) given twice in [{name}]")));
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(s, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(a, v)| {
                        v.ok_or_else(|| {
                            p.err(
                                header_line[name],
                                format!("pair ({s}, {a}) missing from [{name}]"),
                            )
                        })
                    })
                    .collect()
            })
            .collect()
    };
    let transition = table("P", Some(ns))?;
    let measurements = table("Z", None)?;
    let dim = measurements[0][0].len();

    let mdp = VectorMdp::new(beta, transition, measurements, gamma, Some(bound))
        .map_err(|e| p.err(gamma_line, e.to_string()))?;

    let Some(noise_rows) = sections.get("noise") else {
        return Ok(mdp);
    };
    let mut noise: Vec<Option<Vec<NoiseOutcome>>> = vec![None; ns * na];
    for (l, t) in noise_rows {
        let (lhs, rhs) = t
            .split_once(':')
            .ok_or_else(|| p.err(*l, "expected `s a : p z.. ; ...`"))?;
        let (s, a) = p.pair(*l, lhs, ns, na)?;
        let mut atoms = Vec::new();
        for atom in rhs.split(';') {
            let v = p.numbers(*l, atom)?;
            if v.len() != dim + 1 {
                return Err(p.err(*l, format!("noise atom needs 1 + {dim} values")));
            }
            atoms.push(NoiseOutcome {
                prob: v[0],
                z: v[1..].to_vec(),
            });
        }
        noise[s * na + a] = Some(atoms);
    }
    // Pairs without an explicit entry are deterministic at their mean.
    let noise = noise
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            n.unwrap_or_else(|| {
                vec![NoiseOutcome {
                    prob: 1.0,
                    z: mdp.measurement(i / na, i % na).to_vec(),
                }]
            })
        })
        .collect();
    mdp.with_noise(noise)
        .map_err(|e| p.err(header_line["noise"], e.to_string()))
}

pub fn read_mdp_file(path: &Path) -> Result<VectorMdp> {
    let text = std::fs::read_to_string(path)?;
    parse_mdp(&text, &path.display().to_string())
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Serialises an MDP in the description format. Floats use round-trip
/// formatting, so `parse_mdp(write_mdp(m)) == m`.
pub fn write_mdp(mdp: &VectorMdp) -> String {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut out = String::new();
    let _ = writeln!(out, "[states]\n{ns}\n[actions]\n{na}");
    let _ = writeln!(out, "[beta]\n{}", join(mdp.initial_dist()));
    out.push_str("[P]\n");
    for s in 0..ns {
        for a in 0..na {
            let _ = writeln!(out, "{s} {a} : {}", join(mdp.transition_row(s, a)));
        }
    }
    out.push_str("[Z]\n");
    for s in 0..ns {
        for a in 0..na {
            let _ = writeln!(out, "{s} {a} : {}", join(mdp.measurement(s, a)));
        }
    }
    let _ = writeln!(
        out,
        "[gamma]\n{:?}\n[bound]\n{:?}",
        mdp.gamma(),
        mdp.bound()
    );
    if let Some(noise) = mdp.noise() {
        out.push_str("[noise]\n");
        for (i, atoms) in noise.iter().enumerate() {
            let body: Vec<String> = atoms
                .iter()
                .map(|o| format!("{:?} {}", o.prob, join(&o.z)))
                .collect();
            let _ = writeln!(out, "{} {} : {}", i / na, i % na, body.join(" ; "));
        }
    }
    out
}

/// Writes long-term measurement vectors as CSV, one column per dimension,
/// 17 significant digits.
pub fn write_measurements_csv<W: Write>(mut w: W, rows: &[Vec<f64>]) -> Result<()> {
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    let header: Vec<String> = (0..dim).map(|k| format!("z_{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
