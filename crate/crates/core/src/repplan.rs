//! SlowFast visual-token budgeting.
//!
//! A video representation is `(T, M, s, p)`: `T` sampled frames, `M` visual
//! tokens per unpooled frame, every `s`-th frame kept in the slow group and
//! pooled with stride `p`, the rest pooled with stride `2p`.
//!
//! Two ways of counting pooled tokens are offered. [`Convention::Literal`]
//! divides the flat token count (`⌊M/p²⌋`, `⌊M/4p²⌋`). [`Convention::Grid`]
//! pools a `√M × √M` token grid (`⌊√M/p⌋²`, `⌊√M/2p⌋²`). With `M = 729`,
//! `p = 2` they give 182 and 169 slow tokens per frame.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepConfig {
    /// Frame count.
    pub frames: u64,
    /// Visual tokens per unpooled frame.
    pub tokens_per_frame: u64,
    /// Slow-group stride.
    pub slow_stride: u64,
    /// Pooling stride for slow frames; fast frames use twice this.
    pub pool_stride: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Literal,
    #[default]
    Grid,
}

impl Convention {
    pub const ALL: [Convention; 2] = [Convention::Literal, Convention::Grid];

    pub fn name(self) -> &'static str {
        match self {
            Convention::Literal => "literal",
            Convention::Grid => "grid",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(Convention::Literal),
            "grid" => Ok(Convention::Grid),
            other => Err(Error::InvalidInput(format!(
                "unknown convention `{other}` (expected literal or grid)"
            ))),
        }
    }
}

fn exact_sqrt(m: u64) -> Option<u64> {
    let r = (m as f64).sqrt().round() as u64;
    (r.checked_mul(r) == Some(m)).then_some(r)
}

/// Per-frame token counts `(slow, fast)` for `M` tokens and stride `p`.
pub fn per_frame_tokens(m: u64, p: u64, convention: Convention) -> Result<(u64, u64)> {
    if m == 0 || p == 0 {
        return Err(Error::InvalidInput("M and p must be >= 1".into()));
    }
    match convention {
        Convention::Literal => Ok((m / (p * p), m / (4 * p * p))),
        Convention::Grid => {
            let side = exact_sqrt(m).ok_or_else(|| {
                Error::InvalidInput(format!("grid convention needs square M, got {m}"))
            })?;
            if side < 2 * p {
                return Err(Error::InvalidInput(format!(
                    "grid convention needs sqrt(M) >= 2p, got sqrt({m}) = {side} and p = {p}"
                )));
            }
            let slow = side / p;
            let fast = side / (2 * p);
            Ok((slow * slow, fast * fast))
        }
    }
}

impl RepConfig {
    pub fn new(frames: u64, tokens_per_frame: u64, slow_stride: u64, pool_stride: u64) -> Self {
        RepConfig {
            frames,
            tokens_per_frame,
            slow_stride,
            pool_stride,
        }
    }

    pub fn validate(&self, convention: Convention) -> Result<()> {
        for (name, v) in [
            ("T", self.frames),
            ("M", self.tokens_per_frame),
            ("s", self.slow_stride),
            ("p", self.pool_stride),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be >= 1")));
            }
        }
        per_frame_tokens(self.tokens_per_frame, self.pool_stride, convention).map(|_| ())
    }

    pub fn slow_count(&self) -> u64 {
        self.frames / self.slow_stride
    }
}

fn total(slow_frames: u64, fast_frames: u64, per: (u64, u64)) -> u64 {
    slow_frames * per.0 + fast_frames * per.1
}

pub fn token_count(cfg: &RepConfig, convention: Convention) -> Result<u64> {
    cfg.validate(convention)?;
    let per = per_frame_tokens(cfg.tokens_per_frame, cfg.pool_stride, convention)?;
    let slow = cfg.slow_count();
    Ok(total(slow, cfg.frames - slow, per))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPlan {
    pub config: RepConfig,
    pub convention: Convention,
    pub slow_indices: Vec<u64>,
    pub fast_indices: Vec<u64>,
    pub tokens_slow: u64,
    pub tokens_fast: u64,
    pub total: u64,
}

impl TokenPlan {
    /// One character per frame in frame order: `S` slow, `f` fast.
    pub fn layout(&self) -> String {
        let mut out = vec!['f'; self.config.frames as usize];
        for &i in &self.slow_indices {
            out[i as usize] = 'S';
        }
        out.into_iter().collect()
    }
}

/// Slow frames at `0, s, 2s, …`, `⌊T/s⌋` of them; everything else is fast.
pub fn build_plan(cfg: &RepConfig, convention: Convention) -> Result<TokenPlan> {
    cfg.validate(convention)?;
    let (tokens_slow, tokens_fast) =
        per_frame_tokens(cfg.tokens_per_frame, cfg.pool_stride, convention)?;
    let s = cfg.slow_stride;
    let slow_indices: Vec<u64> = (0..cfg.slow_count()).map(|k| k * s).collect();
    let fast_indices: Vec<u64> = (0..cfg.frames)
        .filter(|i| !(i % s == 0 && i / s < cfg.slow_count()))
        .collect();
    let total = total(
        slow_indices.len() as u64,
        fast_indices.len() as u64,
        (tokens_slow, tokens_fast),
    );
    Ok(TokenPlan {
        config: *cfg,
        convention,
        slow_indices,
        fast_indices,
        tokens_slow,
        tokens_fast,
        total,
    })
}

/// Largest `T` whose token count fits in `budget`.
pub fn max_frames_under_budget(
    m: u64,
    s: u64,
    p: u64,
    budget: u64,
    convention: Convention,
) -> Result<u64> {
    let count = |t: u64| token_count(&RepConfig::new(t, m, s, p), convention);
    let (slow, _) = per_frame_tokens(m, p, convention)?;
    if slow == 0 {
        return Err(Error::InvalidInput(format!(
            "M = {m} with p = {p} leaves no slow tokens; the frame count is unbounded"
        )));
    }
    let one = count(1)?;
    if one > budget {
        return Err(Error::InvalidInput(format!(
            "budget {budget} is below the {one} tokens of a single frame"
        )));
    }
    // count(T) >= ⌊T/s⌋·slow, so this bound always exceeds the budget
    let mut hi = s.saturating_mul(budget / slow + 1).max(2);
    while count(hi)? <= budget {
        hi = hi.saturating_mul(2);
    }
    let mut lo = 1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchors() {
        let c = |t, m, s, p, conv| token_count(&RepConfig::new(t, m, s, p), conv).unwrap();
        assert_eq!(c(32, 729, 1, 2, Convention::Grid), 5408);
        assert_eq!(c(32, 729, 1, 2, Convention::Literal), 5824);
        assert_eq!(c(64, 729, 3, 2, Convention::Literal), 5757);
        assert_eq!(c(1, 729, 1, 1, Convention::Grid), 729);
        assert_eq!(c(1, 729, 1, 1, Convention::Literal), 729);
    }

    #[test]
    fn plans() {
        let p = build_plan(&RepConfig::new(4, 729, 1, 2), Convention::Grid).unwrap();
        assert_eq!(p.slow_indices, vec![0, 1, 2, 3]);
        assert!(p.fast_indices.is_empty());
        let p = build_plan(&RepConfig::new(6, 729, 3, 2), Convention::Grid).unwrap();
        assert_eq!(p.slow_indices, vec![0, 3]);
        assert_eq!(p.fast_indices, vec![1, 2, 4, 5]);
        assert_eq!(p.layout(), "SffSff");
        // ⌊7/3⌋ = 2, so index 6 stays fast
        let p = build_plan(&RepConfig::new(7, 729, 3, 2), Convention::Grid).unwrap();
        assert_eq!(p.layout(), "SffSfff");
    }

    #[test]
    fn invalid_configs() {
        assert!(token_count(&RepConfig::new(4, 730, 1, 2), Convention::Grid).is_err());
        assert!(token_count(&RepConfig::new(4, 729, 1, 14), Convention::Grid).is_err());
        assert!(token_count(&RepConfig::new(0, 729, 1, 2), Convention::Literal).is_err());
        assert!(token_count(&RepConfig::new(4, 730, 1, 2), Convention::Literal).is_ok());
    }

    #[test]
    fn budget_boundaries() {
        assert_eq!(max_frames_under_budget(729, 1, 2, 5408, Convention::Grid).unwrap(), 32);
        assert_eq!(max_frames_under_budget(729, 1, 2, 5407, Convention::Grid).unwrap(), 31);
        assert!(max_frames_under_budget(729, 1, 2, 100, Convention::Grid).is_err());
        assert!(max_frames_under_budget(3, 1, 1, 100, Convention::Literal).is_ok());
        assert!(max_frames_under_budget(3, 1, 2, 100, Convention::Literal).is_err());
    }

    fn grid_cfg() -> impl Strategy<Value = (RepConfig, Convention)> {
        (1u64..200, 2u64..40, 1u64..6, 1u64..5, any::<bool>()).prop_filter_map(
            "pooling stride too large",
            |(t, side, s, p, literal)| {
                let conv = if literal { Convention::Literal } else { Convention::Grid };
                let cfg = RepConfig::new(t, side * side, s, p);
                cfg.validate(conv).ok().map(|_| (cfg, conv))
            },
        )
    }

    proptest! {
        #[test]
        fn plan_total_matches_count((cfg, conv) in grid_cfg()) {
            let plan = build_plan(&cfg, conv).unwrap();
            prop_assert_eq!(plan.total, token_count(&cfg, conv).unwrap());
            let mut all: Vec<u64> = plan.slow_indices.iter().chain(&plan.fast_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..cfg.frames).collect::<Vec<_>>());
            prop_assert_eq!(plan.slow_indices.len() as u64, cfg.frames / cfg.slow_stride);
        }

        #[test]
        fn monotone_in_frames((cfg, conv) in grid_cfg()) {
            let next = RepConfig { frames: cfg.frames + 1, ..cfg };
            prop_assert!(token_count(&next, conv).unwrap() >= token_count(&cfg, conv).unwrap());
        }

        #[test]
        fn nonincreasing_in_pool_stride((cfg, conv) in grid_cfg()) {
            let next = RepConfig { pool_stride: cfg.pool_stride + 1, ..cfg };
            if next.validate(conv).is_ok() {
                prop_assert!(token_count(&next, conv).unwrap() <= token_count(&cfg, conv).unwrap());
            }
        }

        #[test]
        fn slowfast_never_costs_more((cfg, conv) in grid_cfg()) {
            let all_slow = RepConfig { slow_stride: 1, ..cfg };
            let (slow, _) = per_frame_tokens(cfg.tokens_per_frame, cfg.pool_stride, conv).unwrap();
            prop_assert_eq!(token_count(&all_slow, conv).unwrap(), cfg.frames * slow);
            prop_assert!(token_count(&cfg, conv).unwrap() <= token_count(&all_slow, conv).unwrap());
        }

        #[test]
        fn budget_search_matches_scan(side in 2u64..30, s in 1u64..5, p in 1u64..4, budget in 0u64..20_000, literal in any::<bool>()) {
            let conv = if literal { Convention::Literal } else { Convention::Grid };
            let m = side * side;
            let found = max_frames_under_budget(m, s, p, budget, conv);
            let count = |t| token_count(&RepConfig::new(t, m, s, p), conv);
            match count(1) {
                Err(_) => prop_assert!(found.is_err()),
                Ok(one) if one > budget => prop_assert!(found.is_err()),
                Ok(_) => {
                    let (slow, _) = per_frame_tokens(m, p, conv).unwrap();
                    if slow == 0 {
                        prop_assert!(found.is_err());
                    } else {
                        let mut t = 1;
                        while count(t + 1).unwrap() <= budget {
                            t += 1;
                        }
                        prop_assert_eq!(found.unwrap(), t);
                    }
                }
            }
        }
    }
}
