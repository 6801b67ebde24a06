//! Exploration datasets and their reward-augmented counterparts.
//!
//! On disk a dataset is a CSV body preceded by one metadata line:
//!
//! ```text
//! # ucbzero-dataset 1 states=5 actions=3 horizon=5 episodes=2 seed=7
//! k,h,s,a,next
//! 0,0,0,2,4
//! ...
//! ```
//!
//! Rows are episode-major with 0-based `k` and `h`. Augmented datasets add a
//! trailing `r` column. Extra `key=value` pairs in the metadata line are
//! preserved verbatim.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mdp::Sizes;

const MAGIC: &str = "# ucbzero-dataset";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationDataset {
    sizes: Sizes,
    episodes: usize,
    steps: Vec<Transition>,
}

impl ExplorationDataset {
    pub(crate) fn with_capacity(sizes: Sizes, episodes: usize) -> Self {
        Self {
            sizes,
            episodes: 0,
            steps: Vec::with_capacity(episodes * sizes.horizon),
        }
    }

    pub(crate) fn push_episode(&mut self, episode: &[Transition]) {
        debug_assert_eq!(episode.len(), self.sizes.horizon);
        self.steps.extend_from_slice(episode);
        self.episodes += 1;
    }

    /// Builds a dataset from flat episode-major steps and checks every
    /// structural invariant.
    pub fn from_steps(sizes: Sizes, episodes: usize, steps: Vec<Transition>) -> Result<Self> {
        let ds = Self {
            sizes,
            episodes,
            steps,
        };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let sz = self.sizes;
        if self.episodes == 0 {
            return Err(Error::Shape("dataset has no episodes".into()));
        }
        if self.steps.len() != self.episodes * sz.horizon {
            return Err(Error::Shape(format!(
                "dataset has {} steps, expected {} episodes x {} steps",
                self.steps.len(),
                self.episodes,
                sz.horizon
            )));
        }
        for (k, ep) in self.steps.chunks(sz.horizon).enumerate() {
            for (h, t) in ep.iter().enumerate() {
                if t.state >= sz.states || t.next >= sz.states || t.action >= sz.actions {
                    return Err(Error::Shape(format!(
                        "episode {k} step {h}: index out of range {t:?}"
                    )));
                }
                if h == 0 && t.state != 0 {
                    return Err(Error::Shape(format!(
                        "episode {k} does not start in state 0"
                    )));
                }
                if h + 1 < sz.horizon && ep[h + 1].state != t.next {
                    return Err(Error::Shape(format!(
                        "episode {k} step {h}: next state {} but step {} is in state {}",
                        t.next,
                        h + 1,
                        ep[h + 1].state
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn episode(&self, k: usize) -> &[Transition] {
        let h = self.sizes.horizon;
        &self.steps[k * h..(k + 1) * h]
    }

    pub fn episodes(&self) -> impl Iterator<Item = &[Transition]> {
        self.steps.chunks(self.sizes.horizon)
    }

    /// Keeps only the first `episodes` episodes.
    pub fn truncated(&self, episodes: usize) -> Result<Self> {
        if episodes == 0 || episodes > self.episodes {
            return Err(Error::Parameter(format!(
                "cannot truncate {} episodes to {episodes}",
                self.episodes
            )));
        }
        Ok(Self {
            sizes: self.sizes,
            episodes,
            steps: self.steps[..episodes * self.sizes.horizon].to_vec(),
        })
    }

    /// Visitation counts N_h(s, a), laid out like [`Sizes::cell`].
    pub fn visit_counts(&self) -> Vec<u64> {
        let sz = self.sizes;
        let mut counts = vec![0u64; sz.cells()];
        for ep in self.episodes() {
            for (h, t) in ep.iter().enumerate() {
                counts[sz.cell(h, t.state, t.action)] += 1;
            }
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, w: W, meta: &BTreeMap<String, String>) -> Result<()> {
        write_rows(self, None, w, meta)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<DatasetFile> {
        read_rows(r)
    }
}

/// An exploration dataset with one sampled reward per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardAugmentedDataset {
    dataset: ExplorationDataset,
    rewards: Vec<f64>,
}

impl RewardAugmentedDataset {
    pub fn new(dataset: ExplorationDataset, rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() != dataset.steps.len() {
            return Err(Error::Shape(format!(
                "{} rewards for {} steps",
                rewards.len(),
                dataset.steps.len()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Parameter(format!("reward {r} outside [0, 1]")));
        }
        Ok(Self { dataset, rewards })
    }

    pub fn dataset(&self) -> &ExplorationDataset {
        &self.dataset
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn sizes(&self) -> Sizes {
        self.dataset.sizes
    }

    pub fn num_episodes(&self) -> usize {
        self.dataset.episodes
    }

    pub fn write_csv<W: Write>(&self, w: W, meta: &BTreeMap<String, String>) -> Result<()> {
        write_rows(&self.dataset, Some(&self.rewards), w, meta)
    }
}

/// Contents of a dataset file.
#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub dataset: ExplorationDataset,
    pub rewards: Option<Vec<f64>>,
    pub meta: BTreeMap<String, String>,
}

impl DatasetFile {
    pub fn into_augmented(self) -> Result<RewardAugmentedDataset> {
        let rewards = self
            .rewards
            .ok_or_else(|| Error::Shape("dataset file has no reward column".into()))?;
        RewardAugmentedDataset::new(self.dataset, rewards)
    }
}

const RESERVED: [&str; 4] = ["states", "actions", "horizon", "episodes"];

fn write_rows<W: Write>(
    ds: &ExplorationDataset,
    rewards: Option<&[f64]>,
    mut w: W,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let sz = ds.sizes;
    write!(
        w,
        "{MAGIC} {VERSION} states={} actions={} horizon={} episodes={}",
        sz.states, sz.actions, sz.horizon, ds.episodes
    )?;
    for (k, v) in meta {
        if RESERVED.contains(&k.as_str()) {
            continue;
        }
        if k.contains([' ', '=']) || v.contains([' ', '\n']) {
            return Err(Error::Parameter(format!("metadata `{k}={v}` is not a single token")));
        }
        write!(w, " {k}={v}")?;
    }
    writeln!(w)?;
    match rewards {
        Some(_) => writeln!(w, "k,h,s,a,next,r")?,
        None => writeln!(w, "k,h,s,a,next")?,
    }
    for (i, t) in ds.steps.iter().enumerate() {
        let (k, h) = (i / sz.horizon, i % sz.horizon);
        match rewards {
            Some(r) => writeln!(w, "{k},{h},{},{},{},{}", t.state, t.action, t.next, r[i])?,
            None => writeln!(w, "{k},{h},{},{},{}", t.state, t.action, t.next)?,
        }
    }
    Ok(())
}

fn read_rows<R: BufRead>(r: R) -> Result<DatasetFile> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.ok_or(Error::Parse {
        line: 1,
        msg: "empty dataset file".into(),
    })?;
    let rest = header.strip_prefix(MAGIC).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("expected `{MAGIC} <version> ...`"),
    })?;
    let mut tokens = rest.split_whitespace();
    let version: u32 = parse(tokens.next().unwrap_or(""), 1, "version")?;
    if version != VERSION {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported dataset version {version}"),
        });
    }
    let mut meta = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("metadata token `{tok}` is not key=value"),
        })?;
        meta.insert(k.to_string(), v.to_string());
    }
    let field = |key: &str| -> Result<usize> {
        let v = meta.get(key).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("metadata is missing `{key}`"),
        })?;
        parse(v, 1, key)
    };
    let sizes = Sizes::new(field("states")?, field("actions")?, field("horizon")?)?;
    let episodes = field("episodes")?;
    for key in RESERVED {
        meta.remove(key);
    }

    let columns = lines.next().transpose()?.unwrap_or_default();
    let with_rewards = match columns.trim() {
        "k,h,s,a,next" => false,
        "k,h,s,a,next,r" => true,
        other => {
            return Err(Error::Parse {
                line: 2,
                msg: format!("unexpected column header `{other}`"),
            })
        }
    };

    let mut steps = Vec::with_capacity(episodes * sizes.horizon);
    let mut rewards = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 3;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let want = if with_rewards { 6 } else { 5 };
        if f.len() != want {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected {want} fields, found {}", f.len()),
            });
        }
        let k: usize = parse(f[0], n, "k")?;
        let h: usize = parse(f[1], n, "h")?;
        let idx = steps.len();
        if (k, h) != (idx / sizes.horizon, idx % sizes.horizon) {
            return Err(Error::Parse {
                line: n,
                msg: format!("row ({k}, {h}) out of episode-major order"),
            });
        }
        steps.push(Transition {
            state: parse(f[2], n, "s")?,
            action: parse(f[3], n, "a")?,
            next: parse(f[4], n, "next")?,
        });
        if with_rewards {
            rewards.push(parse(f[5], n, "r")?);
        }
    }
    let dataset = ExplorationDataset::from_steps(sizes, episodes, steps)?;
    Ok(DatasetFile {
        dataset,
        rewards: with_rewards.then_some(rewards),
        meta,
    })
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from `{tok}`"),
    })
}
