//! Cosine similarity between spectra as an optimal one-to-one peak matching.
//!
//! Pairs of peaks within `tau` Da form a bipartite candidate graph. The graph
//! is split into connected components and each component is solved exactly
//! with the shortest augmenting path assignment algorithm.

use thiserror::Error;

use crate::spectra::SpectrumRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("tolerance must be positive (got {0})")]
    Tolerance(f64),
    #[error("spectrum `{0}` is empty or has zero norm")]
    EmptySpectrum(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Absolute m/z tolerance in Da.
    pub tau: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { tau: 0.05 }
    }
}

impl MatchConfig {
    pub fn new(tau: f64) -> Result<Self, ScoringError> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self { tau })
        } else {
            Err(ScoringError::Tolerance(tau))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineResult {
    pub score: f64,
    /// Matched `(peak in s, peak in t)` index pairs, sorted.
    pub matches: Vec<(usize, usize)>,
}

fn unit_heights(s: &SpectrumRecord) -> Result<Vec<f64>, ScoringError> {
    let norm = s.peaks().iter().map(|p| p.height * p.height).sum::<f64>().sqrt();
    if s.peaks().is_empty() || !(norm > 0.0) || !norm.is_finite() {
        return Err(ScoringError::EmptySpectrum(s.id.clone()));
    }
    Ok(s.peaks().iter().map(|p| p.height / norm).collect())
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Maximum-weight assignment on a dense `rows × cols` matrix with
/// `rows <= cols`; returns the column assigned to each row.
fn assign(weight: &[Vec<f64>]) -> Vec<usize> {
    let n = weight.len();
    let m = weight.first().map_or(0, Vec::len);
    debug_assert!(n <= m);
    // Minimize negated weights; 1-based arrays with a virtual column 0.
    let cost = |i: usize, j: usize| -weight[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

pub fn cosine_similarity(
    s: &SpectrumRecord,
    t: &SpectrumRecord,
    cfg: &MatchConfig,
) -> Result<CosineResult, ScoringError> {
    if !(cfg.tau > 0.0) {
        return Err(ScoringError::Tolerance(cfg.tau));
    }
    let ys = unit_heights(s)?;
    let yt = unit_heights(t)?;
    let (ps, pt) = (s.peaks(), t.peaks());

    // Candidate pairs via a sweep over the m/z-sorted peak lists.
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut lo = 0;
    for (i, a) in ps.iter().enumerate() {
        while lo < pt.len() && pt[lo].mz < a.mz - cfg.tau {
            lo += 1;
        }
        for (j, b) in pt.iter().enumerate().skip(lo) {
            if b.mz > a.mz + cfg.tau {
                break;
            }
            if (a.mz - b.mz).abs() <= cfg.tau {
                let w = ys[i] * yt[j];
                if w > 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
    }

    // Components over nodes 0..|s| (left) and |s|..|s|+|t| (right).
    let n = ps.len() + pt.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for &(i, j, _) in &edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, ps.len() + j));
        if a != b {
            parent[a] = b;
        }
    }
    let mut comp_edges: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
    for &e in &edges {
        let root = find(&mut parent, e.0);
        comp_edges.entry(root).or_default().push(e);
    }

    let mut matches = Vec::new();
    for es in comp_edges.values() {
        if es.len() == 1 {
            matches.push((es[0].0, es[0].1));
            continue;
        }
        let mut rows: Vec<usize> = es.iter().map(|e| e.0).collect();
        let mut cols: Vec<usize> = es.iter().map(|e| e.1).collect();
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        let transpose = rows.len() > cols.len();
        let (r_ids, c_ids) = if transpose { (&cols, &rows) } else { (&rows, &cols) };
        let mut wm = vec![vec![0.0; c_ids.len()]; r_ids.len()];
        for &(i, j, w) in es {
            let (r, c) = if transpose { (j, i) } else { (i, j) };
            let ri = r_ids.binary_search(&r).expect("row id");
            let ci = c_ids.binary_search(&c).expect("col id");
            wm[ri][ci] = w;
        }
        for (ri, ci) in assign(&wm).into_iter().enumerate() {
            if wm[ri][ci] > 0.0 {
                let (a, b) = (r_ids[ri], c_ids[ci]);
                matches.push(if transpose { (b, a) } else { (a, b) });
            }
        }
    }
    matches.sort_unstable();
    let score: f64 = matches.iter().map(|&(i, j)| ys[i] * yt[j]).sum();
    Ok(CosineResult {
        score: score.clamp(0.0, 1.0),
        matches,
    })
}
