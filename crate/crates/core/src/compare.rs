//! Peak-by-peak comparison of two arrival lists.

use std::fmt::{self, Write as _};

use crate::tdtransform::{Arrival, SweepConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Largest accepted time difference.
    pub time: f64,
    /// Largest accepted amplitude difference, relative to the reference.
    pub amplitude: f64,
}

impl Tolerances {
    /// Two time steps and 10%.
    pub fn for_sweep(sweep: &SweepConfig) -> Self {
        Tolerances {
            time: 2.0 * sweep.time_step(),
            amplitude: 0.1,
        }
    }

    fn accepts(&self, candidate: &Arrival, reference: &Arrival) -> bool {
        (candidate.time - reference.time).abs() <= self.time
            && (candidate.amplitude - reference.amplitude).abs()
                <= self.amplitude * reference.amplitude.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matched {
    pub candidate: Arrival,
    pub reference: Arrival,
}

impl Matched {
    pub fn time_delta(&self) -> f64 {
        self.candidate.time - self.reference.time
    }

    pub fn amplitude_delta(&self) -> f64 {
        self.candidate.amplitude - self.reference.amplitude
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub tolerances: Tolerances,
    pub matched: Vec<Matched>,
    pub unmatched_candidates: Vec<Arrival>,
    pub unmatched_references: Vec<Arrival>,
}

impl Report {
    /// Every candidate peak found a reference. Leftover references do not
    /// count against it.
    pub fn passed(&self) -> bool {
        self.unmatched_candidates.is_empty()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} matched, {} unmatched candidate(s), {} unmatched reference(s) (tolerance {} in time, {}% in amplitude)",
            self.matched.len(),
            self.unmatched_candidates.len(),
            self.unmatched_references.len(),
            self.tolerances.time,
            self.tolerances.amplitude * 100.0
        );
        for m in &self.matched {
            let _ = writeln!(
                s,
                "  matched    t = {:.6}  a = {:+.6e}  dt = {:+.3e}  da = {:+.3e}",
                m.candidate.time,
                m.candidate.amplitude,
                m.time_delta(),
                m.amplitude_delta()
            );
        }
        for a in &self.unmatched_candidates {
            let _ = writeln!(
                s,
                "  candidate  t = {:.6}  a = {:+.6e}  no reference",
                a.time, a.amplitude
            );
        }
        for a in &self.unmatched_references {
            let _ = writeln!(
                s,
                "  reference  t = {:.6}  a = {:+.6e}  no candidate",
                a.time, a.amplitude
            );
        }
        f.write_str(&s)
    }
}

/// Pair each candidate with the nearest unclaimed reference that lies within
/// tolerance. Candidates are visited in time order.
pub fn compare(candidates: &[Arrival], references: &[Arrival], tolerances: Tolerances) -> Report {
    let mut claimed = vec![false; references.len()];
    let mut matched = Vec::new();
    let mut unmatched_candidates = Vec::new();
    let mut order: Vec<&Arrival> = candidates.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));
    for c in order {
        let best = references
            .iter()
            .enumerate()
            .filter(|&(i, r)| !claimed[i] && tolerances.accepts(c, r))
            .min_by(|(_, a), (_, b)| (a.time - c.time).abs().total_cmp(&(b.time - c.time).abs()));
        match best {
            Some((i, r)) => {
                claimed[i] = true;
                matched.push(Matched {
                    candidate: *c,
                    reference: *r,
                });
            }
            None => unmatched_candidates.push(*c),
        }
    }
    let unmatched_references = references
        .iter()
        .zip(&claimed)
        .filter(|(_, &c)| !c)
        .map(|(r, _)| *r)
        .collect();
    Report {
        tolerances,
        matched,
        unmatched_candidates,
        unmatched_references,
    }
}
