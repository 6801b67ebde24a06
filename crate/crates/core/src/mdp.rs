//! Tabular episodic MDPs with time-dependent transitions.
//!
//! Steps are 0-based throughout the crate: an episode visits steps
//! `0..horizon`, and the value at step `horizon` is identically zero. The start
//! state is always state 0.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::rng::{categorical, RngStream};

/// Tolerance on row sums used by validation.
pub const ROW_SUM_TOL: f64 = 1e-9;

const TEXT_MAGIC: &str = "ucbzero-mdp";
const TEXT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sizes {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Sizes {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::Parameter(format!(
                "sizes must be positive (S={states}, A={actions}, H={horizon})"
            )));
        }
        Ok(Self {
            states,
            actions,
            horizon,
        })
    }

    /// Number of (h, s, a) cells.
    pub fn cells(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    /// Flat index of (h, s, a).
    #[inline]
    pub fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    /// Flat index of (h, s).
    #[inline]
    pub fn step_state(&self, h: usize, s: usize) -> usize {
        h * self.states + s
    }

    pub fn check(&self, h: usize, s: usize, a: usize) -> Result<()> {
        check_index("step", h, self.horizon)?;
        check_index("state", s, self.states)?;
        check_index("action", a, self.actions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    sizes: Sizes,
    /// Row-major (h, s, a, s').
    transitions: Vec<f64>,
}

/// A single broken invariant found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        h: usize,
        s: usize,
        a: usize,
        sum: f64,
    },
    Negative {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        value: f64,
    },
    NonFinite {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { h, s, a, sum } => {
                write!(f, "row (h={h}, s={s}, a={a}) sums to {sum}")
            }
            Violation::Negative {
                h,
                s,
                a,
                next,
                value,
            } => write!(f, "P(s'={next} | h={h}, s={s}, a={a}) = {value} is negative"),
            Violation::NonFinite { h, s, a, next } => {
                write!(f, "P(s'={next} | h={h}, s={s}, a={a}) is not finite")
            }
        }
    }
}

impl TabularMdp {
    /// Builds an MDP from a flat (h, s, a, s') tensor. Only the shape is
    /// checked here; use [`validate`](Self::validate) for the probability
    /// invariants.
    pub fn from_raw(sizes: Sizes, transitions: Vec<f64>) -> Result<Self> {
        let expected = sizes.cells() * sizes.states;
        if transitions.len() != expected {
            return Err(Error::Shape(format!(
                "transition tensor has {} entries, expected {expected}",
                transitions.len()
            )));
        }
        Ok(Self { sizes, transitions })
    }

    /// Builds an MDP row by row.
    pub fn from_fn<F>(sizes: Sizes, mut row: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize, &mut [f64]),
    {
        let s_count = sizes.states;
        let mut transitions = vec![0.0; sizes.cells() * s_count];
        for h in 0..sizes.horizon {
            for s in 0..s_count {
                for a in 0..sizes.actions {
                    let start = sizes.cell(h, s, a) * s_count;
                    row(h, s, a, &mut transitions[start..start + s_count]);
                }
            }
        }
        Self::from_raw(sizes, transitions)
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    pub fn num_states(&self) -> usize {
        self.sizes.states
    }

    pub fn num_actions(&self) -> usize {
        self.sizes.actions
    }

    pub fn horizon(&self) -> usize {
        self.sizes.horizon
    }

    pub fn start_state(&self) -> usize {
        0
    }

    /// Next-state distribution P_h(· | s, a). Panics on out-of-range indices.
    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.sizes.cell(h, s, a) * self.sizes.states;
        &self.transitions[start..start + self.sizes.states]
    }

    pub fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.row(h, s, a)[next]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// `[P_h v](s, a)` for a value vector over next states.
    #[inline]
    pub fn expect(&self, h: usize, s: usize, a: usize, values: &[f64]) -> f64 {
        self.row(h, s, a)
            .iter()
            .zip(values)
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        let sz = self.sizes;
        for h in 0..sz.horizon {
            for s in 0..sz.states {
                for a in 0..sz.actions {
                    let row = self.row(h, s, a);
                    let mut finite = true;
                    for (next, &p) in row.iter().enumerate() {
                        if !p.is_finite() {
                            finite = false;
                            report.push(Violation::NonFinite { h, s, a, next });
                        } else if p < 0.0 {
                            report.push(Violation::Negative {
                                h,
                                s,
                                a,
                                next,
                                value: p,
                            });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if finite && (sum - 1.0).abs() > ROW_SUM_TOL {
                        report.push(Violation::RowSum { h, s, a, sum });
                    }
                }
            }
        }
        report
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Draws s' ~ P_h(· | s, a).
    pub fn sample_transition(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut RngStream,
    ) -> Result<usize> {
        self.sizes.check(h, s, a)?;
        Ok(self.step(h, s, a, rng))
    }

    /// Unchecked variant of [`sample_transition`](Self::sample_transition)
    /// for inner loops. Consumes exactly one uniform draw.
    #[inline]
    pub fn step(&self, h: usize, s: usize, a: usize, rng: &mut RngStream) -> usize {
        categorical(self.row(h, s, a), rng.uniform())
    }

    /// Writes the plain-text representation (17 significant digits per
    /// probability, rows in (h, s, a) order).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let sz = self.sizes;
        writeln!(w, "{TEXT_MAGIC} {TEXT_VERSION}")?;
        writeln!(w, "states {}", sz.states)?;
        writeln!(w, "actions {}", sz.actions)?;
        writeln!(w, "horizon {}", sz.horizon)?;
        writeln!(w, "start {}", self.start_state())?;
        for h in 0..sz.horizon {
            for s in 0..sz.states {
                for a in 0..sz.actions {
                    write!(w, "{h} {s} {a}")?;
                    for p in self.row(h, s, a) {
                        write!(w, " {p:.16e}")?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("text format is ASCII")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| match l {
                Ok(l) => !l.trim().is_empty() && !l.trim_start().starts_with('#'),
                Err(_) => true,
            });
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("unexpected end of input, expected {what}"),
                }),
            }
        };

        let (n, header) = next_line("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(TEXT_MAGIC) {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected `{TEXT_MAGIC} <version>`"),
            });
        }
        let version: u32 = parse_token(parts.next(), n, "version")?;
        if version != TEXT_VERSION {
            return Err(Error::Parse {
                line: n,
                msg: format!("unsupported version {version}"),
            });
        }

        let mut keyed = |key: &str| -> Result<usize> {
            let (n, line) = next_line(key)?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse {
                    line: n,
                    msg: format!("expected `{key} <value>`"),
                });
            }
            parse_token(parts.next(), n, key)
        };
        let states = keyed("states")?;
        let actions = keyed("actions")?;
        let horizon = keyed("horizon")?;
        let start = keyed("start")?;
        if start != 0 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("start state must be 0, found {start}"),
            });
        }
        let sizes = Sizes::new(states, actions, horizon)?;

        let mut transitions = Vec::with_capacity(sizes.cells() * states);
        for h in 0..horizon {
            for s in 0..states {
                for a in 0..actions {
                    let (n, line) = next_line("transition row")?;
                    let mut parts = line.split_whitespace();
                    let idx: [usize; 3] = [
                        parse_token(parts.next(), n, "step")?,
                        parse_token(parts.next(), n, "state")?,
                        parse_token(parts.next(), n, "action")?,
                    ];
                    if idx != [h, s, a] {
                        return Err(Error::Parse {
                            line: n,
                            msg: format!("expected row ({h}, {s}, {a}), found {idx:?}"),
                        });
                    }
                    for _ in 0..states {
                        transitions.push(parse_token(parts.next(), n, "probability")?);
                    }
                    if parts.next().is_some() {
                        return Err(Error::Parse {
                            line: n,
                            msg: "trailing tokens after row".into(),
                        });
                    }
                }
            }
        }
        Self::from_raw(sizes, transitions)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }
}

fn parse_token<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from `{tok}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single() -> TabularMdp {
        TabularMdp::from_raw(Sizes::new(1, 1, 1).unwrap(), vec![1.0]).unwrap()
    }

    #[test]
    fn trivial_mdp_is_valid() {
        assert!(single().validate().is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let sizes = Sizes::new(2, 1, 2).unwrap();
        let mdp = TabularMdp::from_raw(sizes, vec![0.5, 0.5, 1.0, 0.0, 0.5, 0.5, 0.4, 0.5])
            .unwrap();
        let report = mdp.validate();
        assert_eq!(report.len(), 1);
        match report[0] {
            Violation::RowSum { h, s, a, sum } => {
                assert_eq!((h, s, a), (1, 1, 0));
                assert!((sum - 0.9).abs() < 1e-12);
            }
            ref v => panic!("unexpected violation {v}"),
        }
    }

    #[test]
    fn negative_entry_is_reported() {
        let sizes = Sizes::new(2, 1, 1).unwrap();
        let mdp = TabularMdp::from_raw(sizes, vec![1.2, -0.2, 0.0, 1.0]).unwrap();
        let report = mdp.validate();
        assert!(report.contains(&Violation::Negative {
            h: 0,
            s: 0,
            a: 0,
            next: 1,
            value: -0.2
        }));
    }

    #[test]
    fn wrong_shape_rejected() {
        let sizes = Sizes::new(2, 2, 1).unwrap();
        assert!(matches!(
            TabularMdp::from_raw(sizes, vec![1.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn point_mass_always_sampled() {
        let sizes = Sizes::new(4, 1, 1).unwrap();
        let mdp = TabularMdp::from_fn(sizes, |_, _, _, row| row[2] = 1.0).unwrap();
        let mut rng = RngStream::new(1, "env");
        for _ in 0..1000 {
            assert_eq!(mdp.sample_transition(0, 3, 0, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn uniform_frequencies_within_three_sigma() {
        let sizes = Sizes::new(4, 1, 1).unwrap();
        let mdp = TabularMdp::from_fn(sizes, |_, _, _, row| row.fill(0.25)).unwrap();
        let mut rng = RngStream::new(9, "env");
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[mdp.sample_transition(0, 0, 0, &mut rng).unwrap()] += 1;
        }
        // binomial sd of a frequency at p = 1/4
        let sd = (0.25f64 * 0.75 / draws as f64).sqrt();
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() < 3.0 * sd, "freq {freq}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let sizes = Sizes::new(5, 1, 1).unwrap();
        let mdp = TabularMdp::from_fn(sizes, |_, _, _, row| row.fill(0.2)).unwrap();
        let run = || {
            let mut rng = RngStream::new(3, "env");
            (0..50)
                .map(|_| mdp.sample_transition(0, 0, 0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn out_of_range_is_index_error() {
        let mdp = single();
        let mut rng = RngStream::new(0, "env");
        assert!(matches!(
            mdp.sample_transition(1, 0, 0, &mut rng),
            Err(Error::Index { what: "step", .. })
        ));
        assert!(matches!(
            mdp.sample_transition(0, 0, 3, &mut rng),
            Err(Error::Index { what: "action", .. })
        ));
    }

    #[test]
    fn text_rejects_nonzero_start() {
        let text = single().to_text().replace("start 0", "start 1");
        assert!(matches!(TabularMdp::from_text(&text), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(
            s in 1usize..4, a in 1usize..3, h in 1usize..4,
            raw in proptest::collection::vec(0.0f64..1.0, 48),
        ) {
            let sizes = Sizes::new(s, a, h).unwrap();
            let mut i = 0;
            let mdp = TabularMdp::from_fn(sizes, |_, _, _, row| {
                for p in row.iter_mut() {
                    *p = raw[i % raw.len()] + 1e-3;
                    i += 1;
                }
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
            }).unwrap();
            let back = TabularMdp::from_text(&mdp.to_text()).unwrap();
            prop_assert_eq!(back.sizes(), mdp.sizes());
            for (x, y) in back.transitions().iter().zip(mdp.transitions()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
