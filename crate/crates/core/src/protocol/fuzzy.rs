//! Mamdani fuzzy inference for the FCA baseline: triangular memberships over
//! three inputs (residual energy ratio, node degree, centrality), a total
//! 27-entry IF-THEN rule table, min-conjunction, max-aggregation, and
//! centroid defuzzification over a fixed output grid.

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

/// Output grid resolution for centroid defuzzification. The chance score is
/// defined on this fixed grid, keeping inference cheap and deterministic.
pub const OUTPUT_GRID_POINTS: usize = 201;

/// Triangular membership: peak at `b`, feet at `a` and `c`. Degenerate
/// shoulders (a == b or b == c) clamp to 1 on the flat side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Triangle {
    pub fn membership(&self, x: f64) -> f64 {
        if x < self.a || x > self.c {
            return 0.0;
        }
        if x <= self.b {
            if self.b == self.a {
                1.0
            } else {
                (x - self.a) / (self.b - self.a)
            }
        } else if self.c == self.b {
            1.0
        } else {
            (self.c - x) / (self.c - self.b)
        }
    }
}

/// Three linguistic levels per input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    Medium,
    High,
}

pub const LEVELS: [Level; 3] = [Level::Low, Level::Medium, Level::High];

/// Five output levels for the cluster-head chance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanceLevel {
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
}

pub const CHANCE_LEVELS: [ChanceLevel; 5] = [
    ChanceLevel::VeryLow,
    ChanceLevel::Low,
    ChanceLevel::Medium,
    ChanceLevel::High,
    ChanceLevel::VeryHigh,
];

/// One input variable: a domain and its three overlapping triangles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputVariable {
    pub domain_min: f64,
    pub domain_max: f64,
    pub low: Triangle,
    pub medium: Triangle,
    pub high: Triangle,
}

impl InputVariable {
    /// Standard three-level cover of [lo, hi] with full overlap.
    pub fn standard(lo: f64, hi: f64) -> Self {
        let mid = (lo + hi) / 2.0;
        Self {
            domain_min: lo,
            domain_max: hi,
            low: Triangle {
                a: lo,
                b: lo,
                c: mid,
            },
            medium: Triangle {
                a: lo,
                b: mid,
                c: hi,
            },
            high: Triangle {
                a: mid,
                b: hi,
                c: hi,
            },
        }
    }

    pub fn triangle(&self, level: Level) -> &Triangle {
        match level {
            Level::Low => &self.low,
            Level::Medium => &self.medium,
            Level::High => &self.high,
        }
    }

    pub fn fuzzify(&self, raw: f64) -> [f64; 3] {
        let x = raw.clamp(self.domain_min, self.domain_max);
        [
            self.low.membership(x),
            self.medium.membership(x),
            self.high.membership(x),
        ]
    }
}

/// One IF-THEN entry: the conjunction of three input levels implies an
/// output chance level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyRule {
    pub energy: Level,
    pub degree: Level,
    pub centrality: Level,
    pub chance: ChanceLevel,
}

/// The complete rule base plus membership geometry, loadable from a config
/// file so the table can be audited and altered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRuleBase {
    pub energy: InputVariable,
    pub degree: InputVariable,
    pub centrality: InputVariable,
    /// Output domain (chance score).
    pub chance_min: f64,
    pub chance_max: f64,
    pub chance_levels: [Triangle; 5],
    pub rules: Vec<FuzzyRule>,
}

impl Default for FuzzyRuleBase {
    fn default() -> Self {
        let chance_min = 0.0;
        let chance_max = 100.0;
        let chance_levels = [
            Triangle {
                a: 0.0,
                b: 0.0,
                c: 25.0,
            },
            Triangle {
                a: 0.0,
                b: 25.0,
                c: 50.0,
            },
            Triangle {
                a: 25.0,
                b: 50.0,
                c: 75.0,
            },
            Triangle {
                a: 50.0,
                b: 75.0,
                c: 100.0,
            },
            Triangle {
                a: 75.0,
                b: 100.0,
                c: 100.0,
            },
        ];
        // Energy dominates; degree and centrality shift the outcome one step
        // within the band the energy level allows. Low-energy rules top out
        // at Low, so an empty battery can never reach the midpoint chance.
        let mut rules = Vec::with_capacity(27);
        for (ei, e) in LEVELS.iter().enumerate() {
            for (di, d) in LEVELS.iter().enumerate() {
                for (ci, c) in LEVELS.iter().enumerate() {
                    let support = di + ci; // 0..=4
                    let band = match ei {
                        0 => [ChanceLevel::VeryLow, ChanceLevel::Low, ChanceLevel::Low],
                        1 => [ChanceLevel::Low, ChanceLevel::Medium, ChanceLevel::High],
                        _ => [
                            ChanceLevel::Medium,
                            ChanceLevel::High,
                            ChanceLevel::VeryHigh,
                        ],
                    };
                    let pick = match support {
                        0 | 1 => band[0],
                        2 => band[1],
                        _ => band[2],
                    };
                    rules.push(FuzzyRule {
                        energy: *e,
                        degree: *d,
                        centrality: *c,
                        chance: pick,
                    });
                }
            }
        }
        Self {
            energy: InputVariable::standard(0.0, 1.0),
            degree: InputVariable::standard(0.0, 20.0),
            centrality: InputVariable::standard(0.0, 1.0),
            chance_min,
            chance_max,
            chance_levels,
            rules,
        }
    }
}

impl FuzzyRuleBase {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rule base serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let base: FuzzyRuleBase = toml::from_str(text)
            .map_err(|e| ScenarioError::Validation(format!("fuzzy rule file: {e}")))?;
        base.validate()?;
        Ok(base)
    }

    /// The rule table must be total over the 27 input combinations.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut seen = [[[false; 3]; 3]; 3];
        for r in &self.rules {
            let (e, d, c) = (
                level_idx(r.energy),
                level_idx(r.degree),
                level_idx(r.centrality),
            );
            if seen[e][d][c] {
                return Err(ScenarioError::Validation(format!(
                    "duplicate fuzzy rule for ({:?}, {:?}, {:?})",
                    r.energy, r.degree, r.centrality
                )));
            }
            seen[e][d][c] = true;
        }
        if self.rules.len() != 27 || !seen.iter().flatten().flatten().all(|&s| s) {
            return Err(ScenarioError::Validation(
                "fuzzy rule table must cover all 27 input combinations exactly once".into(),
            ));
        }
        if self.chance_max <= self.chance_min {
            return Err(ScenarioError::Validation(
                "fuzzy chance domain is empty".into(),
            ));
        }
        Ok(())
    }

    fn chance_triangle(&self, level: ChanceLevel) -> &Triangle {
        &self.chance_levels[chance_idx(level)]
    }

    /// Grid samples of every output level's membership, reusable across
    /// inference calls.
    pub fn output_table(&self) -> Vec<[f64; 5]> {
        let span = self.chance_max - self.chance_min;
        (0..OUTPUT_GRID_POINTS)
            .map(|i| {
                let y = self.chance_min + span * i as f64 / (OUTPUT_GRID_POINTS - 1) as f64;
                [
                    self.chance_levels[0].membership(y),
                    self.chance_levels[1].membership(y),
                    self.chance_levels[2].membership(y),
                    self.chance_levels[3].membership(y),
                    self.chance_levels[4].membership(y),
                ]
            })
            .collect()
    }

    /// Full Mamdani inference: fuzzify, fire every rule with min-conjunction,
    /// aggregate clipped output sets with max, defuzzify by centroid.
    /// Deterministic; inputs are clamped to their domains.
    pub fn chance(&self, energy_ratio: f64, degree: f64, centrality: f64) -> f64 {
        self.chance_with_table(&self.output_table(), energy_ratio, degree, centrality)
    }

    /// Same inference against a precomputed `output_table()`.
    pub fn chance_with_table(
        &self,
        table: &[[f64; 5]],
        energy_ratio: f64,
        degree: f64,
        centrality: f64,
    ) -> f64 {
        let e = self.energy.fuzzify(energy_ratio);
        let d = self.degree.fuzzify(degree);
        let c = self.centrality.fuzzify(centrality);

        let mut activation = [0.0f64; 5];
        for rule in &self.rules {
            let strength = e[level_idx(rule.energy)]
                .min(d[level_idx(rule.degree)])
                .min(c[level_idx(rule.centrality)]);
            let slot = &mut activation[chance_idx(rule.chance)];
            if strength > *slot {
                *slot = strength;
            }
        }

        let mut num = 0.0;
        let mut den = 0.0;
        let span = self.chance_max - self.chance_min;
        for (i, levels) in table.iter().enumerate() {
            let y = self.chance_min + span * i as f64 / (OUTPUT_GRID_POINTS - 1) as f64;
            let mut mu: f64 = 0.0;
            for (li, &act) in activation.iter().enumerate() {
                if act > 0.0 {
                    mu = mu.max(act.min(levels[li]));
                }
            }
            num += y * mu;
            den += mu;
        }
        if den == 0.0 {
            // no rule fired (cannot happen with a total table and clamped
            // inputs, but stay well-defined)
            return (self.chance_min + self.chance_max) / 2.0;
        }
        num / den
    }

    /// Centroid of a single fully-activated output level: the best score any
    /// input combination can reach.
    pub fn max_achievable_chance(&self) -> f64 {
        let top = *self.chance_triangle(ChanceLevel::VeryHigh);
        let mut num = 0.0;
        let mut den = 0.0;
        let span = self.chance_max - self.chance_min;
        for i in 0..OUTPUT_GRID_POINTS {
            let y = self.chance_min + span * i as f64 / (OUTPUT_GRID_POINTS - 1) as f64;
            let mu = top.membership(y);
            num += y * mu;
            den += mu;
        }
        num / den
    }
}

fn level_idx(l: Level) -> usize {
    match l {
        Level::Low => 0,
        Level::Medium => 1,
        Level::High => 2,
    }
}

fn chance_idx(l: ChanceLevel) -> usize {
    match l {
        ChanceLevel::VeryLow => 0,
        ChanceLevel::Low => 1,
        ChanceLevel::Medium => 2,
        ChanceLevel::High => 3,
        ChanceLevel::VeryHigh => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_is_total_and_valid() {
        let base = FuzzyRuleBase::default();
        base.validate().unwrap();
        assert_eq!(base.rules.len(), 27);
    }

    #[test]
    fn identical_inputs_give_identical_chance() {
        let base = FuzzyRuleBase::default();
        let a = base.chance(0.7, 12.0, 0.4);
        let b = base.chance(0.7, 12.0, 0.4);
        assert_eq!(a, b);
    }

    #[test]
    fn extremes_hit_the_maximum_achievable_centroid() {
        let base = FuzzyRuleBase::default();
        let best = base.chance(1.0, 20.0, 1.0);
        assert!((best - base.max_achievable_chance()).abs() < 1e-9);
    }

    #[test]
    fn zero_energy_stays_below_the_midpoint_for_any_other_inputs() {
        let base = FuzzyRuleBase::default();
        let mid = (base.chance_min + base.chance_max) / 2.0;
        for d in [0.0, 5.0, 10.0, 15.0, 20.0] {
            for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let chance = base.chance(0.0, d, c);
                assert!(chance < mid, "chance {chance} at degree {d} centrality {c}");
            }
        }
        // rule-table audit: every energy=low consequent is at most medium
        for rule in &base.rules {
            if rule.energy == Level::Low {
                assert!(matches!(
                    rule.chance,
                    ChanceLevel::VeryLow | ChanceLevel::Low | ChanceLevel::Medium
                ));
            }
        }
    }

    #[test]
    fn inputs_outside_the_domain_clamp_to_the_edges() {
        let base = FuzzyRuleBase::default();
        assert_eq!(base.chance(-5.0, 0.0, 0.0), base.chance(0.0, 0.0, 0.0));
        assert_eq!(base.chance(2.0, 25.0, 9.0), base.chance(1.0, 20.0, 1.0));
    }

    #[test]
    fn toml_roundtrip_preserves_the_rule_base() {
        let base = FuzzyRuleBase::default();
        let text = base.to_toml();
        let back = FuzzyRuleBase::from_toml(&text).unwrap();
        assert_eq!(base, back);
    }
}
