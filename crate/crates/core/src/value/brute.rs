use serde::Serialize;

use super::Discount;
use crate::error::{Error, Result};
use crate::model::{CostSpec, HistoryPair, SddeModel};
use crate::sim::SddeState;

/// Largest number of control sequences the oracle will enumerate.
pub const SEARCH_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub value: f64,
    /// Lattice indices of a minimizing sequence (lexicographically first).
    pub sequence: Vec<usize>,
    pub evaluated: u64,
    pub horizon: f64,
}

struct Search<'a, 'm> {
    model: &'m SddeModel,
    cost: &'a CostSpec,
    disc: Discount,
    every: usize,
    decisions: usize,
    zero: Vec<f64>,
    best: f64,
    best_seq: Vec<usize>,
    seq: Vec<usize>,
    evaluated: u64,
}

impl Search<'_, '_> {
    fn go(&mut self, st: &mut SddeState, acc: f64, factor: f64) -> Result<()> {
        let depth = self.seq.len();
        if depth == self.decisions {
            self.evaluated += 1;
            if acc < self.best {
                self.best = acc;
                self.best_seq = self.seq.clone();
            }
            return Ok(());
        }
        let base = st.steps();
        for ui in 0..self.model.controls.len() {
            let u = self.model.controls.point(ui);
            let mut a = acc;
            let mut f = factor;
            for _ in 0..self.every {
                let l0 = self.cost.cost.eval(st.current(), u);
                st.step(u, &self.zero)?;
                let l1 = self.cost.cost.eval(st.current(), u);
                a += self.disc.step(f, l0, l1);
                f *= self.disc.decay;
            }
            self.seq.push(ui);
            self.go(st, a, f)?;
            self.seq.pop();
            st.truncate(base);
        }
        Ok(())
    }
}

/// Exact minimum of the truncated discounted cost over all lattice sequences
/// with `decisions` blocks of `every` steps each (deterministic models only).
pub fn brute_force_value(
    model: &SddeModel,
    cost: &CostSpec,
    history: &HistoryPair,
    decisions: usize,
    every: usize,
) -> Result<BruteForceResult> {
    if !model.is_deterministic() {
        return Err(Error::NotDeterministic);
    }
    if every == 0 || decisions == 0 {
        return Err(Error::Config("brute force needs at least one step".into()));
    }
    let size = (model.controls.len() as f64).powi(decisions as i32);
    if size > SEARCH_LIMIT as f64 {
        return Err(Error::SearchTooLarge {
            size,
            limit: SEARCH_LIMIT as f64,
        });
    }
    let mut st = SddeState::new(model, history)?;
    let mut s = Search {
        model,
        cost,
        disc: Discount::new(cost.rho, model.grid.h()),
        every,
        decisions,
        zero: vec![0.0; model.q()],
        best: f64::INFINITY,
        best_seq: Vec::new(),
        seq: Vec::with_capacity(decisions),
        evaluated: 0,
    };
    s.go(&mut st, 0.0, 1.0)?;
    Ok(BruteForceResult {
        value: s.best,
        sequence: s.best_seq,
        evaluated: s.evaluated,
        horizon: (decisions * every) as f64 * model.grid.h(),
    })
}
