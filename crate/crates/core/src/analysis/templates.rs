use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Windows with more positions are classified by argmax only.
pub const MAX_TEMPLATE_RANKS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateKernel {
    /// 1-based ranks, increasing.
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
    /// `w` followed by the ranks, e.g. `w124`; ranks are joined with `_` when
    /// the window has more than nine positions.
    pub id: String,
}

impl TemplateKernel {
    pub fn new(support: Vec<usize>, size: usize) -> Result<Self> {
        if support.is_empty() || support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Range(format!("template support {support:?} must be nonempty and increasing")));
        }
        if support[0] == 0 || support[support.len() - 1] > size {
            return Err(Error::Range(format!("template support {support:?} outside 1..={size}")));
        }
        let mut weights = vec![0.0; size];
        let w = 1.0 / support.len() as f64;
        for &r in &support {
            weights[r - 1] = w;
        }
        let sep = if size > 9 { "_" } else { "" };
        let id = format!(
            "w{}",
            support.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(sep)
        );
        Ok(TemplateKernel { support, weights, id })
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }
}

impl fmt::Display for TemplateKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// All `2^(mn) - 1` templates of an `m x n` window, ordered by support size
/// and then lexicographically by support.
pub fn enumerate_templates(m: usize, n: usize) -> Result<Vec<TemplateKernel>> {
    let size = m * n;
    if size == 0 {
        return Err(Error::Range(format!("window {m}x{n} is empty")));
    }
    if size > MAX_TEMPLATE_RANKS {
        return Err(Error::TooManyRanks(size));
    }
    let mut out = Vec::with_capacity((1 << size) - 1);
    for k in 1..=size {
        // lexicographic k-combinations of 1..=size
        let mut comb: Vec<usize> = (1..=k).collect();
        loop {
            out.push(TemplateKernel::new(comb.clone(), size)?);
            let Some(i) = (0..k).rev().find(|&i| comb[i] < size - k + i + 1) else {
                break;
            };
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateMatch {
    /// Index into the template list.
    pub index: usize,
    pub distance: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean-nearest template; on exact ties the earlier template wins.
pub fn nearest_template(w: &[f64], templates: &[TemplateKernel]) -> Result<TemplateMatch> {
    let mut best: Option<TemplateMatch> = None;
    for (index, t) in templates.iter().enumerate() {
        if t.weights.len() != w.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![t.weights.len()],
                actual: vec![w.len()],
            });
        }
        let d = distance(w, &t.weights);
        if best.is_none_or(|b| d < b.distance) {
            best = Some(TemplateMatch { index, distance: d });
        }
    }
    best.ok_or_else(|| Error::Degenerate("no templates to match against".into()))
}

/// 1-based rank of the largest weight, the first one on ties.
pub fn argmax_rank(w: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in w.iter().enumerate() {
        if *v > w[best] {
            best = i;
        }
    }
    best + 1
}

/// Smallest distance between two distinct templates, with their indices.
pub fn min_pairwise_distance(templates: &[TemplateKernel]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..templates.len() {
        for j in i + 1..templates.len() {
            let d = distance(&templates[i].weights, &templates[j].weights);
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, i, j));
            }
        }
    }
    best
}
