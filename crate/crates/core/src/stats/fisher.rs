//! 2×2 contingency tables, the hypergeometric kernel and Fisher's exact test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::special::log_choose;
use crate::error::{Error, Result};

/// Counts for a 2×2 comparison.
///
/// |          | condition | no condition |
/// |----------|-----------|--------------|
/// | group 1  | a         | b            |
/// | group 2  | c         | d            |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self> {
        if a + b + c + d == 0 {
            return Err(Error::validation("contingency table", "all cells are zero"));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn row1(&self) -> u64 {
        self.a + self.b
    }

    pub fn row2(&self) -> u64 {
        self.c + self.d
    }

    pub fn col1(&self) -> u64 {
        self.a + self.c
    }

    pub fn margins(&self) -> Margins {
        Margins {
            row1: self.row1(),
            row2: self.row2(),
            col1: self.col1(),
        }
    }

    /// Unconditional sample odds ratio ad/bc (∞ when bc = 0 < ad, NaN when
    /// both products vanish).
    pub fn odds_ratio(&self) -> f64 {
        let ad = (self.a * self.d) as f64;
        let bc = (self.b * self.c) as f64;
        if bc == 0.0 {
            if ad > 0.0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        } else {
            ad / bc
        }
    }

    /// Condition rate in each group, `None` for an empty group.
    pub fn rates(&self) -> (Option<f64>, Option<f64>) {
        let rate = |k: u64, n: u64| (n > 0).then(|| k as f64 / n as f64);
        (rate(self.a, self.row1()), rate(self.c, self.row2()))
    }

    pub fn swap_groups(&self) -> Self {
        Self {
            a: self.c,
            b: self.d,
            c: self.a,
            d: self.b,
        }
    }

    pub fn swap_condition(&self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            c: self.d,
            d: self.c,
        }
    }

    /// The table obtained by writing each group's condition count next to
    /// the group size: (a, a+b, c, c+d).
    pub fn ratio_entry(&self) -> Self {
        Self {
            a: self.a,
            b: self.row1(),
            c: self.c,
            d: self.row2(),
        }
    }
}

impl fmt::Display for ContingencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.a, self.b, self.c, self.d)
    }
}

/// Fixed margins of a 2×2 table; the free cell is `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Margins {
    pub row1: u64,
    pub row2: u64,
    pub col1: u64,
}

impl Margins {
    pub fn total(&self) -> u64 {
        self.row1 + self.row2
    }

    /// Inclusive range of feasible values for `a`.
    pub fn support(&self) -> (u64, u64) {
        let lo = self.col1.saturating_sub(self.row2);
        let hi = self.row1.min(self.col1);
        (lo, hi)
    }

    pub fn ln_pmf(&self, a: u64) -> Result<f64> {
        let (lo, hi) = self.support();
        if self.col1 > self.total() || a < lo || a > hi {
            return Err(Error::validation(
                "a",
                format!("{a} outside feasible range [{lo}, {hi}]"),
            ));
        }
        Ok(log_choose(self.row1, a)? + log_choose(self.row2, self.col1 - a)?
            - log_choose(self.total(), self.col1)?)
    }
}

/// P(X = a) for the hypergeometric distribution with the table's margins.
pub fn hypergeom_pmf(a: u64, margins: &Margins) -> Result<f64> {
    Ok(margins.ln_pmf(a)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMode {
    #[default]
    TwoSided,
    /// Alternative: odds ratio > 1 (upper tail of `a`).
    Greater,
    /// Alternative: odds ratio < 1 (lower tail of `a`).
    Less,
}

impl TailMode {
    pub const ALL: [TailMode; 3] = [TailMode::TwoSided, TailMode::Greater, TailMode::Less];

    pub fn name(self) -> &'static str {
        match self {
            TailMode::TwoSided => "two-sided",
            TailMode::Greater => "greater",
            TailMode::Less => "less",
        }
    }
}

impl fmt::Display for TailMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TailMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TailMode::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::validation("tail", format!("`{s}` is not two-sided/greater/less")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub p_value: f64,
    /// Odds ratio for Fisher, t for Welch.
    pub statistic: f64,
    /// Degrees of freedom; absent for Fisher.
    pub df: Option<f64>,
    pub tail: TailMode,
}

/// Two-sided tables within this relative margin of the observed
/// probability count as "no more probable".
const TIE_SLACK: f64 = 1e-7;

pub fn fisher_exact(table: &ContingencyTable, tail: TailMode) -> Result<TestResult> {
    if table.total() == 0 {
        return Err(Error::validation("contingency table", "all cells are zero"));
    }
    let margins = table.margins();
    let (lo, hi) = margins.support();
    let observed = margins.ln_pmf(table.a)?;

    let mut terms: Vec<f64> = Vec::with_capacity((hi - lo + 1) as usize);
    match tail {
        TailMode::TwoSided => {
            let cutoff = observed + TIE_SLACK.ln_1p();
            for x in lo..=hi {
                let lp = if x == table.a { observed } else { margins.ln_pmf(x)? };
                if lp <= cutoff {
                    terms.push(lp.exp());
                }
            }
        }
        TailMode::Greater => {
            for x in table.a..=hi {
                terms.push(margins.ln_pmf(x)?.exp());
            }
        }
        TailMode::Less => {
            for x in lo..=table.a {
                terms.push(margins.ln_pmf(x)?.exp());
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    let p: f64 = terms.iter().sum();
    Ok(TestResult {
        p_value: p.clamp(0.0, 1.0),
        statistic: table.odds_ratio(),
        df: None,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(a: u64, b: u64, c: u64, d: u64) -> ContingencyTable {
        ContingencyTable::new(a, b, c, d).unwrap()
    }

    #[test]
    fn pmf_examples() {
        let m = t(5, 0, 0, 5).margins();
        assert!((hypergeom_pmf(5, &m).unwrap() - 1.0 / 252.0).abs() < 1e-15);
        // row total 0: point mass
        let m = t(0, 0, 3, 4).margins();
        assert_eq!(m.support(), (0, 0));
        assert!((hypergeom_pmf(0, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!(hypergeom_pmf(1, &m).is_err());
    }

    #[test]
    fn pmf_sums_to_one() {
        let m = t(14, 16, 56, 198).margins();
        let (lo, hi) = m.support();
        let s: f64 = (lo..=hi).map(|x| hypergeom_pmf(x, &m).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_examples() {
        let r = fisher_exact(&t(10, 10, 10, 10), TailMode::TwoSided).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = fisher_exact(&t(5, 0, 0, 5), TailMode::TwoSided).unwrap();
        assert!((r.p_value - 2.0 / 252.0).abs() < 1e-15);
        assert!(r.statistic.is_infinite());
        let r = fisher_exact(&t(5, 0, 0, 5), TailMode::Greater).unwrap();
        assert!((r.p_value - 1.0 / 252.0).abs() < 1e-15);
        assert!(ContingencyTable::new(0, 0, 0, 0).is_err());
    }

    #[test]
    fn published_demographic_tables() {
        let p = |tab| fisher_exact(&tab, TailMode::TwoSided).unwrap().p_value;
        assert!((p(t(67, 100, 25, 92)) - 0.0012).abs() < 0.0005);
        assert!((p(t(58, 59, 62, 105)) - 0.0389).abs() < 0.0005);
    }

    #[test]
    fn tail_names_parse() {
        for tail in TailMode::ALL {
            assert_eq!(tail.name().parse::<TailMode>().unwrap(), tail);
        }
        assert!("both".parse::<TailMode>().is_err());
    }

    fn table() -> impl Strategy<Value = ContingencyTable> {
        (0u64..40, 0u64..40, 0u64..40, 0u64..40)
            .prop_filter("non-empty", |(a, b, c, d)| a + b + c + d > 0)
            .prop_map(|(a, b, c, d)| ContingencyTable { a, b, c, d })
    }

    proptest! {
        #[test]
        fn two_sided_symmetries(tab in table()) {
            let p = fisher_exact(&tab, TailMode::TwoSided).unwrap().p_value;
            let g = fisher_exact(&tab.swap_groups(), TailMode::TwoSided).unwrap().p_value;
            let c = fisher_exact(&tab.swap_condition(), TailMode::TwoSided).unwrap().p_value;
            prop_assert!((p - g).abs() < 1e-12);
            prop_assert!((p - c).abs() < 1e-12);
        }

        #[test]
        fn one_sided_tails_overlap_at_observed(tab in table()) {
            let g = fisher_exact(&tab, TailMode::Greater).unwrap().p_value;
            let l = fisher_exact(&tab, TailMode::Less).unwrap().p_value;
            let obs = hypergeom_pmf(tab.a, &tab.margins()).unwrap();
            prop_assert!((g + l - obs - 1.0).abs() < 1e-10);
        }

        #[test]
        fn p_in_unit_interval(tab in table()) {
            for tail in TailMode::ALL {
                let p = fisher_exact(&tab, tail).unwrap().p_value;
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
