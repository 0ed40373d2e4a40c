use crate::alloc_opt::OptimalAllocation;

/// Job counts by allocation size on an `n`-server loss system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    /// `counts[i - 1]` jobs currently hold `i` servers.
    counts: Vec<u32>,
    n: usize,
    busy: usize,
}

impl SystemState {
    pub fn empty(n: usize, d: usize) -> Self {
        SystemState {
            counts: vec![0; d],
            n,
            busy: 0,
        }
    }

    /// Builds a state from explicit counts; `None` if it overfills `n`.
    pub fn from_counts(n: usize, counts: Vec<u32>) -> Option<Self> {
        let busy = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (k + 1) * c as usize)
            .sum();
        (busy <= n).then_some(SystemState { counts, n, busy })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn busy(&self) -> usize {
        self.busy
    }

    pub fn free(&self) -> usize {
        self.n - self.busy
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn jobs(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub(crate) fn admit(&mut self, servers: usize) {
        debug_assert!(servers >= 1 && servers <= self.free());
        self.counts[servers - 1] += 1;
        self.busy += servers;
    }

    pub(crate) fn release(&mut self, servers: usize) {
        debug_assert!(self.counts[servers - 1] > 0);
        self.counts[servers - 1] -= 1;
        self.busy -= servers;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Draw a target `i` from `p*`, grant `min(i, free)`.
    GreedyPStar,
    /// Grant `min(d, free)`.
    Greedy,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::GreedyPStar => "greedy_pstar",
            Scheme::Greedy => "greedy",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        match name {
            "greedy_pstar" | "greedy(p*)" | "pstar" => Some(Scheme::GreedyPStar),
            "greedy" => Some(Scheme::Greedy),
            _ => None,
        }
    }
}

/// Admission rule for one scheme, with `p*` preprocessed into a CDF.
#[derive(Debug, Clone)]
pub struct Allocator {
    scheme: Scheme,
    p: Vec<f64>,
    cdf: Vec<f64>,
    last: usize,
}

impl Allocator {
    pub fn new(scheme: Scheme, policy: &OptimalAllocation) -> Self {
        let p = match scheme {
            Scheme::GreedyPStar => policy.p_star.clone(),
            Scheme::Greedy => {
                let mut p = vec![0.0; policy.degree()];
                *p.last_mut().unwrap() = 1.0;
                p
            }
        };
        let cdf = p
            .iter()
            .scan(0.0, |acc, &pi| {
                *acc += pi;
                Some(*acc)
            })
            .collect();
        let last = p.iter().rposition(|&pi| pi > 0.0).unwrap() + 1;
        Allocator {
            scheme,
            p,
            cdf,
            last,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn degree(&self) -> usize {
        self.p.len()
    }

    /// Target allocation for draw `u` in `[0, 1)`: inverse CDF over `1..=d`.
    pub fn target(&self, u: f64) -> usize {
        match self.scheme {
            Scheme::Greedy => self.degree(),
            Scheme::GreedyPStar => self
                .cdf
                .iter()
                .position(|&c| u < c)
                .map_or(self.last, |k| k + 1)
                .min(self.last),
        }
    }

    /// Servers granted to an arrival seeing `state`; 0 means blocked.
    pub fn allocate(&self, state: &SystemState, u: f64) -> usize {
        let free = state.free();
        if free == 0 {
            0
        } else {
            self.target(u).min(free)
        }
    }

    /// Probability that an arrival seeing `free` idle servers is granted
    /// `i` servers, for `i = 0..=d` (entry 0 is the blocking probability).
    pub fn grant_probabilities(&self, free: usize) -> Vec<f64> {
        let d = self.degree();
        let mut a = vec![0.0; d + 1];
        if free == 0 {
            a[0] = 1.0;
            return a;
        }
        for (i, ai) in a.iter_mut().enumerate().skip(1) {
            if free >= i {
                *ai += self.p[i - 1];
            }
            if free == i {
                *ai += self.p[i..].iter().sum::<f64>();
            }
        }
        a
    }
}
