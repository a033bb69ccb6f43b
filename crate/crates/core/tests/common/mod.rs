#![allow(dead_code)]

use msformula::elements::{Formula, MONOISOTOPIC_MASSES, N_ELEMENTS};
use msformula::spectra::SpectrumRecord;

/// Every subformula of `p`, by nested counting.
pub fn all_subformulas(p: &Formula) -> Vec<Formula> {
    let limits = *p.counts();
    let mut out = Vec::new();
    let mut cur = [0u8; N_ELEMENTS];
    loop {
        let mut f = Formula::default();
        for (e, &n) in cur.iter().enumerate() {
            f.set_count(e, n);
        }
        out.push(f);
        let mut e = 0;
        loop {
            if e == N_ELEMENTS {
                return out;
            }
            if cur[e] < limits[e] {
                cur[e] += 1;
                break;
            }
            cur[e] = 0;
            e += 1;
        }
    }
}

pub fn plain_mass(f: &Formula) -> f64 {
    f.counts()
        .iter()
        .zip(MONOISOTOPIC_MASSES)
        .map(|(&n, m)| f64::from(n) * m)
        .sum()
}

/// Exhaustive decomposition with the default feasibility rules, sorted.
pub fn brute_decompose(m: f64, p: &Formula, ppm: f64) -> Vec<Formula> {
    let tol = (ppm * 1e-6 * m).max(1e-4);
    let mut out: Vec<Formula> = all_subformulas(p)
        .into_iter()
        .filter(|f| (plain_mass(f) - m).abs() <= tol)
        .filter(|f| {
            let c = f64::from(f.count(0));
            let h = f64::from(f.count(1));
            let mono = h + (6..10).map(|e| f64::from(f.count(e))).sum::<f64>();
            let tri = f64::from(f.count(2)) + f64::from(f.count(4));
            let rdbe = c - mono / 2.0 + tri / 2.0 + 1.0;
            (-0.5..=40.0).contains(&rdbe) && (c == 0.0 || h <= 6.0 * c)
        })
        .collect();
    out.sort();
    out
}

/// Best one-to-one matching score by exhaustive search over partial
/// injections from `s` into `t`.
pub fn brute_cosine(s: &SpectrumRecord, t: &SpectrumRecord, tau: f64) -> f64 {
    let unit = |r: &SpectrumRecord| {
        let n = r.peaks().iter().map(|p| p.height * p.height).sum::<f64>().sqrt();
        r.peaks().iter().map(|p| (p.mz, p.height / n)).collect::<Vec<_>>()
    };
    let (a, b) = (unit(s), unit(t));
    fn go(i: usize, a: &[(f64, f64)], b: &[(f64, f64)], used: &mut Vec<bool>, tau: f64) -> f64 {
        if i == a.len() {
            return 0.0;
        }
        let mut best = go(i + 1, a, b, used, tau);
        for j in 0..b.len() {
            if !used[j] && (a[i].0 - b[j].0).abs() <= tau {
                used[j] = true;
                best = best.max(a[i].1 * b[j].1 + go(i + 1, a, b, used, tau));
                used[j] = false;
            }
        }
        best
    }
    go(0, &a, &b, &mut vec![false; b.len()], tau).min(1.0)
}

/// Poisson draw by sequential inversion.
pub fn poisson(rng: &mut impl rand::Rng, mean: f64) -> u64 {
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && k < 100_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}
