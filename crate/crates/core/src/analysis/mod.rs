//! Template kernels and the distribution of learned ordinal kernels.
//!
//! A template puts weight `1/|S|` on a set `S` of ranks. Every learned kernel
//! is assigned to its Euclidean-nearest template and to the rank of its
//! largest weight; counts can then be grouped by template, by support size or
//! by argmax rank.

mod distribution;
mod templates;

pub use distribution::{distribution, write_distributions_csv, DistributionRow, GroupBy, KernelDistribution};
pub use templates::{
    argmax_rank, enumerate_templates, min_pairwise_distance, nearest_template, TemplateKernel, TemplateMatch,
    MAX_TEMPLATE_RANKS,
};
