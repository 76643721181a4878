use serde::{Deserialize, Serialize};
use std::fmt;

/// Input linguistic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    N,
    Z,
    P,
}

impl Term {
    pub const ALL: [Term; 3] = [Term::N, Term::Z, Term::P];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn negated(self) -> Term {
        match self {
            Term::N => Term::P,
            Term::Z => Term::Z,
            Term::P => Term::N,
        }
    }
}

/// Output linguistic term. `P` engages the left brake, `N` the right one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputTerm {
    N,
    P,
}

impl OutputTerm {
    pub fn negated(self) -> OutputTerm {
        match self {
            OutputTerm::N => OutputTerm::P,
            OutputTerm::P => OutputTerm::N,
        }
    }
}

/// The 27-cell rule table, indexed by `(e_y, e_theta, e_theta_dot)` terms.
/// Only the all-zero cell is empty: when every error is small no brake fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleTable", into = "RuleTable")]
pub struct RuleBase {
    cells: [[[Option<OutputTerm>; 3]; 3]; 3],
}

impl RuleBase {
    pub fn consequent(&self, e_y: Term, e_theta: Term, e_theta_dot: Term) -> Option<OutputTerm> {
        self.cells[e_y.index()][e_theta.index()][e_theta_dot.index()]
    }

    /// Every antecedent triple with its consequent.
    pub fn iter(&self) -> impl Iterator<Item = ([Term; 3], Option<OutputTerm>)> + '_ {
        Term::ALL.into_iter().flat_map(move |ey| {
            Term::ALL.into_iter().flat_map(move |et| {
                Term::ALL
                    .into_iter()
                    .map(move |ed| ([ey, et, ed], self.consequent(ey, et, ed)))
            })
        })
    }

    /// True when negating every antecedent term flips the consequent.
    pub fn is_mirror_symmetric(&self) -> bool {
        self.iter().all(|([ey, et, ed], out)| {
            self.consequent(ey.negated(), et.negated(), ed.negated()) == out.map(OutputTerm::negated)
        })
    }
}

impl Default for RuleBase {
    fn default() -> Self {
        RuleTable::default().try_into().expect("built-in rule table is well formed")
    }
}

/// Text form of the rule table: one block per `e_y` term, three rows
/// (`e_theta` = N, Z, P) of three tokens (`e_theta_dot` = N, Z, P).
/// Tokens are `N`, `P` or `-` for no action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub e_y_n: [String; 3],
    pub e_y_z: [String; 3],
    pub e_y_p: [String; 3],
}

impl Default for RuleTable {
    fn default() -> Self {
        let block = |rows: [&str; 3]| rows.map(String::from);
        Self {
            e_y_n: block(["N N P", "N N P", "N P P"]),
            e_y_z: block(["N N P", "N - P", "N P P"]),
            e_y_p: block(["N N P", "N P P", "N P P"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleTableError {
    #[error("rule block `{block}` row {row}: expected three tokens, got {found:?}")]
    RowShape { block: &'static str, row: usize, found: String },
    #[error("rule block `{block}` row {row}: unknown token `{token}` (expected N, P or -)")]
    Token { block: &'static str, row: usize, token: String },
    #[error("only the all-zero cell may be empty; `{block}` row {row} column {column} is `-`")]
    UnexpectedEmpty { block: &'static str, row: usize, column: usize },
    #[error("the all-zero cell (e_y_z, row Z, column Z) must be `-`")]
    ZeroCellNotEmpty,
}

impl TryFrom<RuleTable> for RuleBase {
    type Error = RuleTableError;

    fn try_from(table: RuleTable) -> Result<Self, Self::Error> {
        let mut cells = [[[None; 3]; 3]; 3];
        let blocks = [("e_y_n", &table.e_y_n), ("e_y_z", &table.e_y_z), ("e_y_p", &table.e_y_p)];
        for (ey, (block, rows)) in blocks.into_iter().enumerate() {
            for (et, row) in rows.iter().enumerate() {
                let tokens: Vec<&str> = row.split_whitespace().collect();
                if tokens.len() != 3 {
                    return Err(RuleTableError::RowShape { block, row: et, found: row.clone() });
                }
                for (ed, token) in tokens.into_iter().enumerate() {
                    let zero_cell = ey == 1 && et == 1 && ed == 1;
                    cells[ey][et][ed] = match token {
                        "N" => Some(OutputTerm::N),
                        "P" => Some(OutputTerm::P),
                        "-" if zero_cell => None,
                        "-" => return Err(RuleTableError::UnexpectedEmpty { block, row: et, column: ed }),
                        other => {
                            return Err(RuleTableError::Token { block, row: et, token: other.to_string() })
                        }
                    };
                    if zero_cell && cells[ey][et][ed].is_some() {
                        return Err(RuleTableError::ZeroCellNotEmpty);
                    }
                }
            }
        }
        Ok(RuleBase { cells })
    }
}

impl From<RuleBase> for RuleTable {
    fn from(base: RuleBase) -> Self {
        let block = |ey: Term| {
            Term::ALL.map(|et| {
                Term::ALL
                    .map(|ed| match base.consequent(ey, et, ed) {
                        Some(OutputTerm::N) => "N",
                        Some(OutputTerm::P) => "P",
                        None => "-",
                    })
                    .join(" ")
            })
        };
        RuleTable { e_y_n: block(Term::N), e_y_z: block(Term::Z), e_y_p: block(Term::P) }
    }
}

impl fmt::Display for RuleBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let table = RuleTable::from(self.clone());
        for (name, rows) in [("e_y=N", table.e_y_n), ("e_y=Z", table.e_y_z), ("e_y=P", table.e_y_p)] {
            writeln!(f, "{name}: {}", rows.join(" | "))?;
        }
        Ok(())
    }
}
