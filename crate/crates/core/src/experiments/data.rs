//! Observational datasets as JSON lines.
//!
//! The first line is a header object; every following line is one step:
//!
//! ```text
//! {"instance":"BD-2","mode":"backdoor","seed":3,"prng":"xoshiro256**/splitmix64","n":2,"horizon":2}
//! {"episode":1,"h":0,"s":0,"a":1,"u":1,"r":0.6,"s_next":1}
//! ```
//!
//! Backdoor steps carry `u`, frontdoor steps carry `m`. Reals are written in
//! shortest round-trip form, so a reload is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AdjustmentMode, ConfoundedMdp, Step, Trajectory};
use crate::rng::{offline_stream, PRNG_NAME};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub instance: String,
    pub mode: AdjustmentMode,
    pub seed: u64,
    pub prng: String,
    pub n: usize,
    pub horizon: usize,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    episode: usize,
    h: usize,
    s: usize,
    a: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    r: f64,
    s_next: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub header: DatasetHeader,
    pub episodes: Vec<Trajectory>,
}

impl OfflineDataset {
    /// Draws `n` behavior-policy episodes from the seed's offline stream.
    /// The stream is sequential, so the dataset for a smaller `n` is a prefix
    /// of the one for a larger `n`.
    pub fn generate(mdp: &ConfoundedMdp, n: usize, mode: AdjustmentMode, seed: u64) -> Result<Self> {
        let mut rng = offline_stream(seed);
        let episodes = (1..=n)
            .map(|i| {
                let mut t = mdp.sample_offline_episode(mode, &mut rng)?;
                t.episode = i;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            header: DatasetHeader {
                instance: mdp.name().to_string(),
                mode,
                seed,
                prng: PRNG_NAME.to_string(),
                n,
                horizon: mdp.horizon(),
            },
            episodes,
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, &self.header)?;
        out.write_all(b"\n")?;
        for t in &self.episodes {
            for (h, st) in t.steps.iter().enumerate() {
                let rec = StepRecord {
                    episode: t.episode,
                    h,
                    s: st.s,
                    a: st.a,
                    u: st.u,
                    m: st.m,
                    r: st.r,
                    s_next: st.s_next,
                };
                serde_json::to_writer(&mut *out, &rec)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing header line".into(),
            })?;
        let header: DatasetHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let mut episodes: Vec<Trajectory> = Vec::with_capacity(header.n);
        let mut lineno = 1;
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            lineno += 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StepRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let bad = |message: String| Error::Parse { line: lineno, message };
            let want_u = header.mode == AdjustmentMode::Backdoor;
            if rec.u.is_some() != want_u || rec.m.is_some() == want_u {
                return Err(bad(format!("step fields do not match {} mode", header.mode)));
            }
            if rec.h == 0 {
                episodes.push(Trajectory {
                    episode: rec.episode,
                    steps: Vec::with_capacity(header.horizon),
                });
            }
            let current = episodes
                .last_mut()
                .filter(|t| t.episode == rec.episode && t.steps.len() == rec.h)
                .ok_or_else(|| bad(format!("step h={} of episode {} is out of order", rec.h, rec.episode)))?;
            current.steps.push(Step {
                s: rec.s,
                a: rec.a,
                u: rec.u,
                m: rec.m,
                r: rec.r,
                s_next: rec.s_next,
            });
        }
        if episodes.len() != header.n || episodes.iter().any(|t| t.steps.len() != header.horizon) {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "expected {} complete episodes of {} steps, found {}",
                    header.n,
                    header.horizon,
                    episodes.len()
                ),
            });
        }
        Ok(Self { header, episodes })
    }

    /// Checks that the data fit `mdp`: same horizon and mode, all indices in range.
    pub fn check_against(&self, mdp: &ConfoundedMdp) -> Result<()> {
        if self.header.mode != mdp.mode() {
            return Err(Error::ModeMismatch {
                expected: mdp.mode(),
                found: self.header.mode,
            });
        }
        if self.header.horizon != mdp.horizon() {
            return Err(Error::Shape(format!(
                "dataset horizon {} does not match instance horizon {}",
                self.header.horizon,
                mdp.horizon()
            )));
        }
        for t in &self.episodes {
            for st in &t.steps {
                let ok = st.s < mdp.n_states()
                    && st.a < mdp.n_actions()
                    && st.s_next < mdp.n_states()
                    && st.u.map_or(true, |u| u < mdp.n_observed())
                    && st.m.map_or(true, |m| m < mdp.n_intermediate());
                if !ok {
                    return Err(Error::Shape(format!(
                        "episode {} has a step outside the instance's index ranges",
                        t.episode
                    )));
                }
            }
        }
        Ok(())
    }
}
