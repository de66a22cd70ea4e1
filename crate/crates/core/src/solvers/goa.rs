//! Greedy online assignment for bin packing: one irrevocable pass.

use crate::problems::{BppInstance, Payload, Solution};

use super::config::{BinRule, GoaMechanism};
use super::{Clock, ObjectiveRun, Recorder, RunOptions, SolverError, StopReason};

/// Outcome of one pass over the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GoaOutcome {
    /// Bin index per item.
    pub assignment: Vec<usize>,
    pub bins_used: usize,
    /// `(clock seconds, items placed, bins used + items still to come)` at every 1% of the stream.
    pub checkpoints: Vec<(f64, usize, usize)>,
}

fn choose(residuals: &[u32], w: u32, cap: u32, rule: &BinRule) -> Option<usize> {
    let fits = residuals.iter().enumerate().filter(|(_, &r)| r >= w);
    match *rule {
        BinRule::FirstFit => fits.map(|(i, _)| i).next(),
        BinRule::BestFit => fits.min_by_key(|&(i, &r)| (r - w, i)).map(|(i, _)| i),
        BinRule::Scored {
            exponent,
            open_threshold,
        } => {
            let c = cap as f64;
            let best = fits
                .map(|(i, &r)| (i, ((r - w) as f64 / c).powf(exponent)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?
                .0;
            let after = (residuals[best] - w) as f64 / c;
            (after <= open_threshold).then_some(best)
        }
    }
}

/// Places every item in stream order per the bin rule, opening a new bin
/// when none is chosen.
pub fn goa_assign(stream: &BppInstance, mech: &GoaMechanism, clock: &mut Clock) -> GoaOutcome {
    let n = stream.items.len();
    let cap = stream.capacity;
    let mut residuals: Vec<u32> = Vec::new();
    let mut assignment = Vec::with_capacity(n);
    let marks: Vec<usize> = (1..=100).map(|q| (q * n).div_ceil(100)).collect();
    let mut checkpoints = Vec::with_capacity(100);
    let mut next_mark = 0;
    for (k, &w) in stream.items.iter().enumerate() {
        clock.tick(residuals.len() as u64 + 1);
        let bin = match choose(&residuals, w, cap, &mech.bin_rule) {
            Some(b) => b,
            None => {
                residuals.push(cap);
                residuals.len() - 1
            }
        };
        residuals[bin] -= w;
        assignment.push(bin);
        let placed = k + 1;
        if next_mark < marks.len() && marks[next_mark] <= placed {
            while next_mark < marks.len() && marks[next_mark] <= placed {
                next_mark += 1;
            }
            checkpoints.push((clock.elapsed(), placed, residuals.len() + (n - placed)));
        }
    }
    GoaOutcome {
        bins_used: residuals.len(),
        assignment,
        checkpoints,
    }
}

// An online pass places every item even past the budget; the trace clips
// at the horizon downstream.
pub(super) fn run(mech: &GoaMechanism, inst: &BppInstance, _budget: f64, opts: &RunOptions) -> Result<ObjectiveRun, SolverError> {
    let mut clock = Clock::start(opts.clock);
    // before any placement the trivial completion uses one bin per item
    let mut rec = Recorder::new(inst.items.len() as f64);
    let out = goa_assign(inst, mech, &mut clock);
    for &(t, _, incumbent) in &out.checkpoints {
        rec.improve(t, incumbent as f64);
    }
    let solution = Solution {
        objective: out.bins_used as f64,
        payload: Payload::Bins(out.assignment),
    };
    Ok(rec.finish(solution, clock.elapsed(), 1, StopReason::Completed))
}
