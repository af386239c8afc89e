//! Derangement combinatorics and the non-uniform permutation proposal used by
//! stratified permABC.
//!
//! Permutations are represented by their image vectors: `sigma[k]` is the
//! simulated compartment assigned to observed compartment `k`. The proposal
//! `rho(. | base)` concentrates near a base permutation: draw
//! `N ~ 1 + Poisson(lambda)` truncated to `{1..K}`, return `base` when
//! `N = 1`, otherwise a uniform permutation at Hamming distance exactly `N`
//! from `base`.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Number of derangements of `n` elements, `!n`.
pub fn subfactorial(n: u32) -> Result<u128> {
    let (mut prev, mut cur) = (1u128, 0u128); // !0, !1
    if n == 0 {
        return Ok(1);
    }
    for i in 2..=n {
        let next = (cur.checked_add(prev))
            .and_then(|s| s.checked_mul(u128::from(i - 1)))
            .ok_or_else(|| Error::Overflow(format!("!{n}")))?;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

pub fn binomial(n: u32, k: u32) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc
            .checked_mul(u128::from(n - i))
            .ok_or_else(|| Error::Overflow(format!("C({n}, {k})")))?
            / u128::from(i + 1);
    }
    Ok(acc)
}

/// `|{sigma in S_K : hamming(sigma, base) = n}| = C(K, n) * !n`.
pub fn partial_derangement_count(k: u32, n: u32) -> Result<u128> {
    if n > k {
        return Err(invalid(format!("Hamming distance {n} exceeds K = {k}")));
    }
    binomial(k, n)?
        .checked_mul(subfactorial(n)?)
        .ok_or_else(|| Error::Overflow(format!("C({k}, {n}) * !{n}")))
}

pub fn hamming(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Uniform derangement of `0..n` by rejection from uniform shuffles.
pub fn random_derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 1 {
        return Err(invalid("no derangement of a single element"));
    }
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &x)| i != x) {
            return Ok(p);
        }
    }
}

/// Uniform draw from the permutations at Hamming distance exactly `n` from
/// `base`: choose `n` positions, derange their images.
pub fn sample_from_stratum<R: Rng + ?Sized>(n: usize, base: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let k = base.len();
    if n == 1 || n > k {
        return Err(invalid(format!("no permutation of {k} elements lies at Hamming distance {n}")));
    }
    let mut out = base.to_vec();
    if n == 0 {
        return Ok(out);
    }
    let positions = index::sample(rng, k, n).into_vec();
    let d = random_derangement(n, rng)?;
    for (i, &pos) in positions.iter().enumerate() {
        out[pos] = base[positions[d[i]]];
    }
    Ok(out)
}

/// Parameters of the stratified permutation proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedProposal {
    k: usize,
    lambda: f64,
    strata: usize,
    perms_per_stratum: Vec<usize>,
    /// p_N(n) for n = 1..=K, stored at index n - 1.
    pn: Vec<f64>,
    /// |S_n| for n = 0..=K as floats.
    stratum_sizes: Vec<f64>,
}

impl StratifiedProposal {
    pub fn new(k: usize, lambda: f64, strata: usize, perms_per_stratum: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        let min_strata = if k == 1 { 1 } else { 2 };
        if strata < min_strata || strata > k {
            return Err(invalid(format!("number of strata H = {strata} must lie in {min_strata}..={k}")));
        }
        if perms_per_stratum.len() != strata {
            return Err(invalid(format!(
                "{} per-stratum counts given for {strata} strata",
                perms_per_stratum.len()
            )));
        }
        if perms_per_stratum[0] != 1 {
            return Err(invalid("the first stratum holds only the base permutation; its count must be 1"));
        }
        if perms_per_stratum.contains(&0) {
            return Err(invalid("every stratum needs at least one permutation"));
        }
        // truncated 1 + Poisson(lambda): p(n) proportional to lambda^(n-1)/(n-1)!
        let mut w = Vec::with_capacity(k);
        let mut term = 1.0f64;
        for n in 1..=k {
            if n > 1 {
                term *= lambda / (n - 1) as f64;
            }
            w.push(term);
        }
        let total: f64 = w.iter().sum();
        let pn = w.into_iter().map(|x| x / total).collect();
        let stratum_sizes = (0..=k as u32)
            .map(|n| partial_derangement_count(k as u32, n).map(|c| c as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k, lambda, strata, perms_per_stratum, pn, stratum_sizes })
    }

    /// `lambda = 1`, `H = min(K, 4)`, counts `(1, 5, 5, 5)` truncated to `H`.
    pub fn with_defaults(k: usize) -> Result<Self> {
        let h = if k == 1 { 1 } else { k.min(4) };
        let counts = (0..h).map(|i| if i == 0 { 1 } else { 5 }).collect();
        Self::new(k, 1.0, h, counts)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn strata(&self) -> usize {
        self.strata
    }

    pub fn perms_per_stratum(&self) -> &[usize] {
        &self.perms_per_stratum
    }

    /// Truncated law of the auxiliary variable `N` on `1..=K`.
    pub fn p_n(&self, n: usize) -> f64 {
        if n == 0 || n > self.k {
            0.0
        } else {
            self.pn[n - 1]
        }
    }

    /// Probability mass of `sigma` under the generative proposal.
    pub fn density(&self, sigma: &[usize], base: &[usize]) -> f64 {
        match hamming(sigma, base) {
            0 => self.p_n(1),
            1 => 0.0,
            n => self.p_n(n) / self.stratum_sizes[n],
        }
    }

    fn draw_n<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        // inverse CDF over n = from..=K with masses p_N(n)
        let total: f64 = (from..=self.k).map(|n| self.p_n(n)).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for n in from..=self.k {
            acc += self.p_n(n);
            if u < acc {
                return n;
            }
        }
        self.k
    }

    /// One draw from the proposal centred on `base`.
    pub fn sample<R: Rng + ?Sized>(&self, base: &[usize], rng: &mut R) -> Vec<usize> {
        match self.draw_n(1, rng) {
            1 => base.to_vec(),
            n => sample_from_stratum(n, base, rng).expect("n lies in 2..=K"),
        }
    }

    /// Stratum index `h` (1-based) of a permutation at Hamming distance `n`.
    pub fn stratum_of(&self, n: usize) -> usize {
        if n == 0 {
            1
        } else {
            n.min(self.strata)
        }
    }

    /// Mixture weight `w_h` of stratum `h`.
    pub fn stratum_weight(&self, h: usize) -> f64 {
        if h < self.strata {
            self.p_n(h)
        } else {
            (self.strata..=self.k).map(|n| self.p_n(n)).sum()
        }
    }

    /// Within-stratum density `rho_h(sigma)`.
    pub fn stratum_density(&self, h: usize, sigma: &[usize], base: &[usize]) -> f64 {
        let n = hamming(sigma, base);
        if self.stratum_of(n) != h || n == 1 {
            return 0.0;
        }
        if h == 1 {
            1.0
        } else if h < self.strata {
            1.0 / self.stratum_sizes[n]
        } else {
            self.p_n(n) / (self.stratum_weight(h) * self.stratum_sizes[n])
        }
    }

    /// Draw from `rho_h`.
    pub fn sample_stratum<R: Rng + ?Sized>(&self, h: usize, base: &[usize], rng: &mut R) -> Vec<usize> {
        if h == 1 {
            return base.to_vec();
        }
        let n = if h < self.strata { h } else { self.draw_n(self.strata, rng) };
        sample_from_stratum(n, base, rng).expect("stratum is non-empty")
    }

    /// Stratified importance estimate of `|{sigma : in_ball(sigma)}|`.
    ///
    /// Returns the estimate and every candidate with its estimator term
    /// `I{in ball} / (L_h * rho_h(sigma))`; the terms sum to the estimate.
    pub fn estimate<R, F>(&self, base: &[usize], rng: &mut R, mut in_ball: F) -> (f64, Vec<(Vec<usize>, f64)>)
    where
        R: Rng + ?Sized,
        F: FnMut(&[usize]) -> bool,
    {
        let mut candidates = Vec::new();
        let mut total = 0.0;
        for h in 1..=self.strata {
            let count = self.perms_per_stratum[h - 1];
            for _ in 0..count {
                let sigma = self.sample_stratum(h, base, rng);
                let term = if in_ball(&sigma) {
                    1.0 / (count as f64 * self.stratum_density(h, &sigma, base))
                } else {
                    0.0
                };
                total += term;
                candidates.push((sigma, term));
            }
        }
        (total, candidates)
    }
}
