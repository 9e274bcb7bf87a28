//! Plain-text instance files.
//!
//! ```text
//! # comment
//! name = BD-2
//! mode = backdoor            # or frontdoor
//! horizon = 2
//! n_states = 2
//! n_actions = 2
//! n_confounders = 2
//! n_intermediate = 2         # frontdoor only
//! obs_map = 0 1              # backdoor only, [w]
//! initial = 0.5 0.5          # [s]
//! conf = ...                 # [h][s][w]
//! behavior = ...             # [h][s][w][a]
//! trans = ...                # backdoor, [h][s][a][w][s']
//! reward = ...               # backdoor, [h][s][a][w]
//! itrans = ...               # frontdoor, [h][s][a][m]
//! ftrans = ...               # frontdoor, [h][s][m][w][s']
//! freward = ...              # frontdoor, [h][s][a]
//! ```
//!
//! Array values are whitespace separated, flattened row-major in the index
//! order shown, and may continue on following lines that contain no `=`.
//! Probability rows whose sum is off by more than [`ROW_TOLERANCE`] are
//! rejected; rows within tolerance but off by more than rounding are
//! renormalized, so files written by this module reload bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{AdjustmentMode, ConfoundedMdp, Dynamics, Shape};
use crate::error::{Error, Result};

pub const ROW_TOLERANCE: f64 = 1e-9;

struct Entry {
    line: usize,
    values: Vec<String>,
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<ConfoundedMdp> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text)
}

pub fn write_instance(mdp: &ConfoundedMdp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_instance(mdp)).map_err(|e| Error::io(path, e))
}

pub fn parse_instance(text: &str) -> Result<ConfoundedMdp> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let key = key.trim().to_string();
            if entries.contains_key(&key) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.insert(
                key.clone(),
                Entry {
                    line: line_no,
                    values: value.split_whitespace().map(str::to_string).collect(),
                },
            );
            current = Some(key);
        } else if let Some(key) = &current {
            let entry = entries.get_mut(key).expect("current key present");
            entry
                .values
                .extend(line.split_whitespace().map(str::to_string));
        } else {
            return Err(Error::Parse {
                line: line_no,
                message: "values before any key".into(),
            });
        }
    }

    let reader = Reader { entries };
    let name = reader.string("name")?;
    let mode: AdjustmentMode = reader.string("mode")?.parse()?;
    let shape = Shape {
        horizon: reader.scalar("horizon")?,
        n_states: reader.scalar("n_states")?,
        n_actions: reader.scalar("n_actions")?,
        n_confounders: reader.scalar("n_confounders")?,
    };
    let Shape {
        horizon: hh,
        n_states: ns,
        n_actions: na,
        n_confounders: nw,
    } = shape;
    let initial = reader.stochastic("initial", ns, ns)?;
    let conf = reader.stochastic("conf", hh * ns * nw, nw)?;
    let behavior = reader.stochastic("behavior", hh * ns * nw * na, na)?;
    match mode {
        AdjustmentMode::Backdoor => {
            let obs_map = reader.indices("obs_map", nw)?;
            let trans = reader.stochastic("trans", hh * ns * na * nw * ns, ns)?;
            let reward = reader.reals("reward", hh * ns * na * nw)?;
            ConfoundedMdp::backdoor(name, shape, obs_map, initial, conf, behavior, trans, reward)
        }
        AdjustmentMode::Frontdoor => {
            let nm: usize = reader.scalar("n_intermediate")?;
            let itrans = reader.stochastic("itrans", hh * ns * na * nm, nm)?;
            let ftrans = reader.stochastic("ftrans", hh * ns * nm * nw * ns, ns)?;
            let reward = reader.reals("freward", hh * ns * na)?;
            ConfoundedMdp::frontdoor(name, shape, nm, initial, conf, behavior, itrans, ftrans, reward)
        }
    }
}

struct Reader {
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn get(&self, key: &str) -> Result<&Entry> {
        self.entries.get(key).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing key `{key}`"),
        })
    }

    fn string(&self, key: &str) -> Result<String> {
        let e = self.get(key)?;
        match e.values.as_slice() {
            [v] => Ok(v.clone()),
            _ => Err(Error::Parse {
                line: e.line,
                message: format!("`{key}` expects a single value"),
            }),
        }
    }

    fn scalar(&self, key: &str) -> Result<usize> {
        let e = self.get(key)?;
        self.string(key)?.parse().map_err(|_| Error::Parse {
            line: e.line,
            message: format!("`{key}` expects a non-negative integer"),
        })
    }

    fn indices(&self, key: &str, len: usize) -> Result<Vec<usize>> {
        let e = self.get(key)?;
        let out = e
            .values
            .iter()
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse {
                line: e.line,
                message: format!("`{key}` expects integers"),
            })?;
        expect_len(key, e.line, out.len(), len)?;
        Ok(out)
    }

    fn reals(&self, key: &str, len: usize) -> Result<Vec<f64>> {
        let e = self.get(key)?;
        let out = e
            .values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse {
                line: e.line,
                message: format!("`{key}` expects real numbers"),
            })?;
        expect_len(key, e.line, out.len(), len)?;
        Ok(out)
    }

    fn stochastic(&self, key: &str, len: usize, row: usize) -> Result<Vec<f64>> {
        let line = self.get(key)?.line;
        let mut out = self.reals(key, len)?;
        for (i, chunk) in out.chunks_mut(row).enumerate() {
            if chunk.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Parse {
                    line,
                    message: format!("`{key}` row {i} has a negative or non-finite entry"),
                });
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Parse {
                    line,
                    message: format!("`{key}` row {i} sums to {sum}"),
                });
            }
            if (sum - 1.0).abs() > super::STOCHASTIC_TOL {
                chunk.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(out)
    }
}

fn expect_len(key: &str, line: usize, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            message: format!("`{key}` has {got} values, expected {expected}"),
        })
    }
}

fn push_array(out: &mut String, key: &str, index: &str, values: &[f64], row: usize) {
    let _ = writeln!(out, "{key} =  # {index}");
    for chunk in values.chunks(row.max(1)) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "  {}", line.join(" "));
    }
}

/// Renders an instance in the file format. Values use shortest round-trip
/// formatting, so parsing the output reproduces the tables bit-exactly.
pub fn render_instance(mdp: &ConfoundedMdp) -> String {
    let Shape {
        horizon,
        n_states,
        n_actions,
        n_confounders,
    } = mdp.shape();
    let mut out = String::new();
    let _ = writeln!(out, "# confounded MDP instance");
    let _ = writeln!(out, "name = {}", mdp.name());
    let _ = writeln!(out, "mode = {}", mdp.mode());
    let _ = writeln!(out, "horizon = {horizon}");
    let _ = writeln!(out, "n_states = {n_states}");
    let _ = writeln!(out, "n_actions = {n_actions}");
    let _ = writeln!(out, "n_confounders = {n_confounders}");
    push_array(&mut out, "initial", "[s]", mdp.initial(), n_states);
    push_array(&mut out, "conf", "[h][s][w]", mdp.conf_table(), n_confounders);
    push_array(&mut out, "behavior", "[h][s][w][a]", mdp.behavior_table(), n_actions);
    match mdp.dynamics() {
        Dynamics::Backdoor { trans, reward } => {
            let map: Vec<String> = mdp.obs_map().iter().map(|u| u.to_string()).collect();
            let _ = writeln!(out, "obs_map = {}", map.join(" "));
            push_array(&mut out, "trans", "[h][s][a][w][s']", trans, n_states);
            push_array(&mut out, "reward", "[h][s][a][w]", reward, n_confounders);
        }
        Dynamics::Frontdoor {
            n_intermediate,
            itrans,
            ftrans,
            reward,
        } => {
            let _ = writeln!(out, "n_intermediate = {n_intermediate}");
            push_array(&mut out, "itrans", "[h][s][a][m]", itrans, *n_intermediate);
            push_array(&mut out, "ftrans", "[h][s][m][w][s']", ftrans, n_states);
            push_array(&mut out, "freward", "[h][s][a]", reward, n_actions);
        }
    }
    out
}
