use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentRole, ChatExchange};

/// USD per one million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl Pricing {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 * self.input_per_million / 1e6
            + completion_tokens as f64 * self.output_per_million / 1e6
    }
}

/// Rough token count used when the endpoint reports no usage.
pub(crate) fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoleUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
}

impl RoleUsage {
    fn add(&mut self, e: &ChatExchange) {
        self.calls += 1;
        self.prompt_tokens += e.prompt_tokens;
        self.completion_tokens += e.completion_tokens;
        self.cost_usd += e.cost_usd;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageSummary {
    pub total: RoleUsage,
    pub by_role: BTreeMap<AgentRole, RoleUsage>,
    /// Calls whose token counts were estimated.
    pub estimated_calls: u64,
}

impl UsageSummary {
    /// Element-wise mean over several runs of the same workload.
    pub fn mean(runs: &[UsageSummary]) -> UsageSummary {
        let mut out = UsageSummary::default();
        if runs.is_empty() {
            return out;
        }
        let n = runs.len() as f64;
        let avg = |f: &dyn Fn(&UsageSummary) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let role_avg = |pick: &dyn Fn(&UsageSummary) -> RoleUsage| RoleUsage {
            calls: (avg(&|r| pick(r).calls as f64)).round() as u64,
            prompt_tokens: (avg(&|r| pick(r).prompt_tokens as f64)).round() as u64,
            completion_tokens: (avg(&|r| pick(r).completion_tokens as f64)).round() as u64,
            cost_usd: avg(&|r| pick(r).cost_usd),
        };
        out.total = role_avg(&|r| r.total);
        for role in AgentRole::ALL {
            if runs.iter().any(|r| r.by_role.contains_key(&role)) {
                let u = role_avg(&|r| r.by_role.get(&role).copied().unwrap_or_default());
                out.by_role.insert(role, u);
            }
        }
        out.estimated_calls = avg(&|r| r.estimated_calls as f64).round() as u64;
        out
    }
}

pub fn accumulate_usage<'a>(exchanges: impl IntoIterator<Item = &'a ChatExchange>) -> UsageSummary {
    let mut summary = UsageSummary::default();
    for e in exchanges {
        summary.total.add(e);
        summary.by_role.entry(e.role).or_default().add(e);
        if e.estimated {
            summary.estimated_calls += 1;
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::CallSite;

    fn exchange(role: AgentRole, p: u64, c: u64, pricing: Pricing) -> ChatExchange {
        ChatExchange {
            role,
            site: CallSite::new(1, 0),
            system_text: String::new(),
            user_text: String::new(),
            response_text: String::new(),
            tool_calls: Vec::new(),
            prompt_tokens: p,
            completion_tokens: c,
            cost_usd: pricing.cost(p, c),
            attempt: 1,
            estimated: false,
        }
    }

    #[test]
    fn cost_formula() {
        let p = Pricing {
            input_per_million: 2.5,
            output_per_million: 10.0,
        };
        assert!((p.cost(1_000_000, 0) - 2.5).abs() < 1e-12);
        assert!((p.cost(1200, 300) - (1200.0 * 2.5e-6 + 300.0 * 1e-5)).abs() < 1e-12);
    }

    #[test]
    fn estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abc"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }

    #[test]
    fn totals_equal_role_sums() {
        let pricing = Pricing {
            input_per_million: 1.0,
            output_per_million: 4.0,
        };
        let xs = vec![
            exchange(AgentRole::Planner, 100, 10, pricing),
            exchange(AgentRole::Coder, 200, 50, pricing),
            exchange(AgentRole::Planner, 300, 20, pricing),
        ];
        let s = accumulate_usage(&xs);
        assert_eq!(s.total.calls, 3);
        assert_eq!(s.total.prompt_tokens, 600);
        assert_eq!(s.by_role[&AgentRole::Planner].prompt_tokens, 400);
        let role_cost: f64 = s.by_role.values().map(|r| r.cost_usd).sum();
        assert!((role_cost - s.total.cost_usd).abs() < 1e-12);
    }

    #[test]
    fn mean_of_runs() {
        let pricing = Pricing {
            input_per_million: 1.0,
            output_per_million: 1.0,
        };
        let a = accumulate_usage(&[exchange(AgentRole::Planner, 100, 0, pricing)]);
        let b = accumulate_usage(&[exchange(AgentRole::Planner, 300, 0, pricing)]);
        let m = UsageSummary::mean(&[a, b]);
        assert_eq!(m.total.prompt_tokens, 200);
        assert!((m.total.cost_usd - 2e-4).abs() < 1e-15);
    }
}
