//! Cyclic sliding windows with uniform exposure.
//!
//! Window `i` holds the ids at positions `(i * interval + j) mod N` of the
//! plan's ordering for `j in 0..window_size`. With `interval | window_size`
//! and `interval | N` there are `N / interval` windows and every id lands in
//! exactly `window_size / interval` of them.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowPlan {
    order: Vec<usize>,
    window_size: usize,
    interval: usize,
    shuffle_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub window_size: usize,
    pub interval: usize,
    pub m: usize,
    pub exposure: usize,
    pub shuffle_seed: Option<u64>,
}

pub fn build_window_plan(
    ids: &[usize],
    window_size: usize,
    interval: usize,
    shuffle_seed: Option<u64>,
) -> Result<WindowPlan> {
    let order = ordering(ids, shuffle_seed)?;
    WindowPlan::from_order(order, window_size, interval, shuffle_seed)
}

/// Like [`build_window_plan`], but drops the tail of the (shuffled) ordering
/// so that its length becomes a multiple of `interval`. Returns the plan and
/// the ids that were left out.
pub fn build_window_plan_truncated(
    ids: &[usize],
    window_size: usize,
    interval: usize,
    shuffle_seed: Option<u64>,
) -> Result<(WindowPlan, Vec<usize>)> {
    if interval == 0 {
        return Err(Error::input("window interval must be >= 1"));
    }
    let mut order = ordering(ids, shuffle_seed)?;
    let keep = order.len() / interval * interval;
    let mut dropped = order.split_off(keep);
    dropped.sort_unstable();
    let plan = WindowPlan::from_order(order, window_size, interval, shuffle_seed)?;
    Ok((plan, dropped))
}

fn ordering(ids: &[usize], shuffle_seed: Option<u64>) -> Result<Vec<usize>> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::input(format!("id {} appears twice in the ordering", w[0])));
    }
    let mut order = ids.to_vec();
    if let Some(s) = shuffle_seed {
        order.shuffle(&mut seed::rng(seed::derive(s, 0x5749_4E44)));
    }
    Ok(order)
}

impl WindowPlan {
    /// Wraps an explicit ordering after checking the divisibility constraints.
    pub fn from_order(
        order: Vec<usize>,
        window_size: usize,
        interval: usize,
        shuffle_seed: Option<u64>,
    ) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::input("cannot build windows over an empty id list"));
        }
        if interval == 0 {
            return Err(Error::input("window interval must be >= 1"));
        }
        if window_size == 0 || window_size > n {
            return Err(Error::input(format!(
                "window size must satisfy 1 <= W <= N; got W={window_size}, N={n}"
            )));
        }
        if window_size % interval != 0 {
            return Err(Error::input(format!(
                "interval must divide window size; got W={window_size}, interval={interval}"
            )));
        }
        if n % interval != 0 {
            return Err(Error::input(format!(
                "interval must divide the number of ordered ids; got N={n}, interval={interval} \
                 (use pad-to-multiple to truncate N to {})",
                n / interval * interval
            )));
        }
        Ok(Self {
            order,
            window_size,
            interval,
            shuffle_seed,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn shuffle_seed(&self) -> Option<u64> {
        self.shuffle_seed
    }

    /// Number of windows `m`.
    pub fn num_windows(&self) -> usize {
        self.order.len() / self.interval
    }

    /// Exposure `n`, the number of windows containing each id.
    pub fn exposure(&self) -> usize {
        self.window_size / self.interval
    }

    pub fn window(&self, i: usize) -> Vec<usize> {
        let n = self.order.len();
        let start = i * self.interval;
        (0..self.window_size)
            .map(|j| self.order[(start + j) % n])
            .collect()
    }

    pub fn windows(&self) -> impl ExactSizeIterator<Item = Vec<usize>> + '_ {
        (0..self.num_windows()).map(move |i| self.window(i))
    }

    /// Ordered ids sorted ascending.
    pub fn sorted_ids(&self) -> Vec<usize> {
        let mut ids = self.order.clone();
        ids.sort_unstable();
        ids
    }

    pub fn summary(&self) -> PlanSummary {
        PlanSummary {
            n: self.order.len(),
            window_size: self.window_size,
            interval: self.interval,
            m: self.num_windows(),
            exposure: self.exposure(),
            shuffle_seed: self.shuffle_seed,
        }
    }
}

/// `W / interval`, cross-checked by counting how often each id occurs.
pub fn exposure_count(plan: &WindowPlan) -> Result<usize> {
    let expected = plan.exposure();
    let ids = plan.sorted_ids();
    let mut counts = vec![0usize; ids.len()];
    for window in plan.windows() {
        for id in window {
            let pos = ids
                .binary_search(&id)
                .map_err(|_| Error::integrity(format!("window contains unknown id {id}")))?;
            counts[pos] += 1;
        }
    }
    if let Some((pos, &c)) = counts.iter().enumerate().find(|(_, &c)| c != expected) {
        return Err(Error::integrity(format!(
            "id {} appears in {c} windows, expected {expected}",
            ids[pos]
        )));
    }
    Ok(expected)
}
