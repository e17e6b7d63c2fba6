use serde::{Deserialize, Serialize};

/// Growth function `K` in the envelope `|q_n| <= K(n) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `K(n) = (1 + ln(1 + n))^3`.
    LogCubed,
    /// `K(n) = (1 + ln(1 + n))^power`.
    LogPower { power: f64 },
}

impl Envelope {
    pub fn eval(&self, n: f64) -> f64 {
        let base = 1.0 + n.ln_1p();
        match *self {
            Envelope::LogCubed => base.powi(3),
            Envelope::LogPower { power } => base.powf(power),
        }
    }
}

/// Sparse diagonal perturbation supported on sites `n = 1 (mod T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    period: usize,
    entries: Vec<(usize, f64)>,
}

impl Potential {
    pub fn new(period: usize) -> Self {
        Self { period, entries: Vec::new() }
    }

    /// Builds from arbitrary `(site, value)` pairs, e.g. read back from disk.
    /// Entries are sorted; zero values are dropped. Support is not enforced.
    pub fn from_entries(period: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(n, _)| n);
        Self { period, entries }
    }

    pub(crate) fn push(&mut self, site: usize, value: f64) {
        debug_assert!(site % self.period == 1 % self.period);
        debug_assert!(self.entries.last().is_none_or(|&(n, _)| n < site));
        if value != 0.0 {
            self.entries.push((site, value));
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `q_n`, zero off the support.
    pub fn value(&self, n: usize) -> f64 {
        self.entries.binary_search_by_key(&n, |&(m, _)| m).map_or(0.0, |i| self.entries[i].1)
    }

    /// Whether every site lies on the `1 (mod T)` lattice.
    pub fn support_ok(&self) -> bool {
        self.entries.iter().all(|&(n, _)| n % self.period == 1 % self.period)
    }

    /// `max |q_n| n`.
    pub fn coulomb_max(&self) -> f64 {
        self.entries.iter().map(|&(n, v)| v.abs() * n as f64).fold(0.0, f64::max)
    }

    /// Worst site and value of `|q_n| n / K(n)`; `None` when empty.
    pub fn envelope_max(&self, k: Envelope) -> Option<(usize, f64)> {
        self.entries.iter().map(|&(n, v)| (n, v.abs() * n as f64 / k.eval(n as f64))).fold(None, |best, cur| match best
        {
            Some((_, r)) if r >= cur.1 => best,
            _ => Some(cur),
        })
    }
}
