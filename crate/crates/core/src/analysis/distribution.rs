use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::templates::{argmax_rank, enumerate_templates, nearest_template, TemplateKernel, MAX_TEMPLATE_RANKS};
use crate::error::{Error, Result};
use crate::pooling::OrdinalKernelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Template,
    SupportSize,
    Argmax,
}

/// Classification of a collection of kernels sharing one window shape.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDistribution {
    window: (usize, usize),
    /// Empty when the window is too large to enumerate.
    templates: Vec<TemplateKernel>,
    /// `(template index, argmax rank) -> count`
    cells: BTreeMap<(Option<usize>, usize), usize>,
    total: usize,
}

/// One CSV row; `template_id` and `support_size` are empty for windows
/// classified by argmax only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub template_id: String,
    pub support_size: Option<usize>,
    pub argmax_rank: usize,
    pub count: usize,
    pub run_id: String,
}

/// Classifies every kernel of every set. Windows of up to
/// [`MAX_TEMPLATE_RANKS`] positions get a nearest template; larger (global)
/// windows only an argmax rank.
pub fn distribution<'a>(sets: impl IntoIterator<Item = &'a OrdinalKernelSet>) -> Result<KernelDistribution> {
    let mut sets = sets.into_iter().peekable();
    let window = sets
        .peek()
        .ok_or_else(|| Error::Degenerate("no kernels to classify".into()))?
        .window();
    let size = window.0 * window.1;
    let templates = if size <= MAX_TEMPLATE_RANKS {
        enumerate_templates(window.0, window.1)?
    } else {
        Vec::new()
    };
    let mut cells = BTreeMap::new();
    let mut total = 0;
    for set in sets {
        if set.window() != window {
            return Err(Error::MixedKernelShapes(format!("{:?} and {:?}", window, set.window())));
        }
        for k in set.kernels() {
            let template = if templates.is_empty() {
                None
            } else {
                Some(nearest_template(k, &templates)?.index)
            };
            *cells.entry((template, argmax_rank(k))).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Degenerate("no kernels to classify".into()));
    }
    Ok(KernelDistribution {
        window,
        templates,
        cells,
        total,
    })
}

impl KernelDistribution {
    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn templates(&self) -> &[TemplateKernel] {
        &self.templates
    }

    /// Counts per template id in canonical order, zeros included.
    pub fn by_template(&self) -> Vec<(&str, usize)> {
        let mut counts = vec![0; self.templates.len()];
        for (&(t, _), &c) in &self.cells {
            if let Some(t) = t {
                counts[t] += c;
            }
        }
        self.templates.iter().map(|t| t.id.as_str()).zip(counts).collect()
    }

    /// Counts per group key: support size or argmax rank. Template grouping
    /// is keyed by template index. Support-size grouping is empty for
    /// argmax-only windows.
    pub fn groups(&self, group_by: GroupBy) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for (&(t, argmax), &c) in &self.cells {
            let key = match group_by {
                GroupBy::Template => t,
                GroupBy::SupportSize => t.map(|t| self.templates[t].support_size()),
                GroupBy::Argmax => Some(argmax),
            };
            if let Some(key) = key {
                *out.entry(key).or_insert(0) += c;
            }
        }
        out
    }

    /// Nonzero `(template, argmax)` cells, in canonical template order.
    pub fn rows(&self, run_id: &str) -> Vec<DistributionRow> {
        self.cells
            .iter()
            .map(|(&(t, argmax), &count)| DistributionRow {
                template_id: t.map(|t| self.templates[t].id.clone()).unwrap_or_default(),
                support_size: t.map(|t| self.templates[t].support_size()),
                argmax_rank: argmax,
                count,
                run_id: run_id.to_string(),
            })
            .collect()
    }
}

/// Writes `(run_id, distribution)` pairs as one CSV table with columns
/// `template_id, support_size, argmax_rank, count, run_id`.
pub fn write_distributions_csv<W: Write>(out: W, runs: &[(String, KernelDistribution)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["template_id", "support_size", "argmax_rank", "count", "run_id"])?;
    for (run_id, dist) in runs {
        for row in dist.rows(run_id) {
            w.serialize(row)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
