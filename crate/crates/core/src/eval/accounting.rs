use serde::{Deserialize, Serialize};

use crate::pipeline::Accounting;

use super::stats::{mean, median};

/// Provider prices in US dollars per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prices {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl Prices {
    pub fn cost(&self, accounting: &Accounting) -> f64 {
        (accounting.input_tokens as f64 * self.input_per_million
            + accounting.output_tokens as f64 * self.output_per_million)
            / 1_000_000.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub median: f64,
    pub mean: f64,
    pub total: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        Distribution { median: median(values), mean: mean(values), total: values.iter().sum() }
    }
}

/// Per-question runtime, tokens and cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub questions: usize,
    pub wall_ms: Distribution,
    pub input_tokens: Distribution,
    pub output_tokens: Distribution,
    pub llm_calls: Distribution,
    pub cost_usd: Distribution,
}

pub fn accounting_report(items: &[Accounting], prices: &Prices) -> AccountingReport {
    let of = |f: &dyn Fn(&Accounting) -> f64| Distribution::of(&items.iter().map(f).collect::<Vec<_>>());
    AccountingReport {
        questions: items.len(),
        wall_ms: of(&|a| a.wall_ms as f64),
        input_tokens: of(&|a| a.input_tokens as f64),
        output_tokens: of(&|a| a.output_tokens as f64),
        llm_calls: of(&|a| a.llm_calls as f64),
        cost_usd: of(&|a| prices.cost(a)),
    }
}
