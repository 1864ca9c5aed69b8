use std::fmt;

use super::formula::{Formula, Parser, SyntaxError};

/// One open goal: hypotheses in arrival order and a target.
///
/// Hypotheses are named positionally (`h1`, `h2`, ...), so a name always
/// agrees with the index a tactic uses to refer to it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Goal {
    pub hyps: Vec<Formula>,
    pub target: Formula,
}

impl Goal {
    pub fn new(hyps: Vec<Formula>, target: Formula) -> Self {
        Self { hyps, target }
    }

    pub fn from_target(target: Formula) -> Self {
        Self {
            hyps: Vec::new(),
            target,
        }
    }

    pub fn hyp_name(index: usize) -> String {
        format!("h{}", index + 1)
    }

    /// The named view of the hypotheses.
    pub fn named_hyps(&self) -> impl Iterator<Item = (String, &Formula)> {
        self.hyps
            .iter()
            .enumerate()
            .map(|(i, f)| (Self::hyp_name(i), f))
    }

    /// Compact single-line form used in corpus files: `hyp, hyp |- target`,
    /// or just the target when there are no hypotheses.
    pub fn to_line(&self) -> String {
        if self.hyps.is_empty() {
            return self.target.to_string();
        }
        let hyps: Vec<String> = self.hyps.iter().map(Formula::to_string).collect();
        format!("{} |- {}", hyps.join(", "), self.target)
    }

    pub fn parse_line(text: &str) -> Result<Goal, SyntaxError> {
        let mut parser = Parser::new(text);
        if parser.eat("|-") {
            let target = parser.implication()?;
            if !parser.at_end() {
                return Err(SyntaxError {
                    offset: parser.pos,
                    message: "unexpected trailing input".into(),
                });
            }
            return Ok(Goal::from_target(target));
        }
        let mut formulas = vec![parser.implication()?];
        while parser.eat(",") {
            formulas.push(parser.implication()?);
        }
        if parser.eat("|-") {
            let target = parser.implication()?;
            if !parser.at_end() {
                return Err(SyntaxError {
                    offset: parser.pos,
                    message: "unexpected trailing input".into(),
                });
            }
            return Ok(Goal::new(formulas, target));
        }
        if !parser.at_end() {
            return Err(SyntaxError {
                offset: parser.pos,
                message: "unexpected trailing input".into(),
            });
        }
        if formulas.len() != 1 {
            return Err(SyntaxError {
                offset: parser.pos,
                message: "expected '|-' after hypotheses".into(),
            });
        }
        Ok(Goal::from_target(formulas.pop().unwrap()))
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, hyp) in self.named_hyps() {
            writeln!(f, "{name} : {hyp}")?;
        }
        write!(f, "|- {}", self.target)
    }
}

/// The list of open goals. An empty list means the proof is complete.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProofState {
    pub goals: Vec<Goal>,
}

/// Fingerprint reserved for the proved (no goals) state.
pub const PROVED_FINGERPRINT: u64 = 0x9e37_79b9_7f4a_7c15;

impl ProofState {
    pub fn new(goals: Vec<Goal>) -> Self {
        Self { goals }
    }

    pub fn single(goal: Goal) -> Self {
        Self { goals: vec![goal] }
    }

    pub fn is_proved(&self) -> bool {
        self.goals.is_empty()
    }

    /// Canonical multi-line rendering; the basis for fingerprints and the
    /// state-length filter.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// 64-bit hash of the canonical rendering. Equal states hash equally
    /// regardless of how they were built.
    pub fn fingerprint(&self) -> u64 {
        if self.is_proved() {
            return PROVED_FINGERPRINT;
        }
        let h = crate::hashing::hash_str(0, &self.canonical());
        if h == PROVED_FINGERPRINT {
            h ^ 1
        } else {
            h
        }
    }
}

impl fmt::Display for ProofState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.goals.is_empty() {
            return f.write_str("no goals");
        }
        for (i, goal) in self.goals.iter().enumerate() {
            if i > 0 {
                f.write_str("\n\n")?;
            }
            write!(f, "{goal}")?;
        }
        Ok(())
    }
}

/// Fingerprint of a state as a free function.
pub fn state_fingerprint(s: &ProofState) -> u64 {
    s.fingerprint()
}
