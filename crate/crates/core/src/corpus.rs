//! Synthetic theorem corpus with ground-truth tactic proofs.
//!
//! Theorems are generated forward from proof templates: a template picks a
//! proof script shape, random sub-formulas fill it in, and the resulting
//! script is replayed through the prover before the theorem is accepted.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{apply_tactic, replay, Formula, Goal, ProofState, Replay, StepResult, Tactic};
use crate::hashing::mix64;

pub const TRAIN_SIZE: usize = 1000;
pub const VALID_SIZE: usize = 20;
pub const MAX_PROOF_LEN: usize = 3;
const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no theorem of proof length {target_len} passed filtering after {attempts} attempts")]
    GenerationExhausted { target_len: usize, attempts: usize },
    #[error("proof length {0} not in 1..=3")]
    BadLength(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theorem {
    pub name: String,
    pub initial_state: ProofState,
    pub gt_proof: Vec<Tactic>,
}

impl Theorem {
    /// Builds a theorem from its single starting goal.
    pub fn new(name: impl Into<String>, goal: Goal, gt_proof: Vec<Tactic>) -> Self {
        Self {
            name: name.into(),
            initial_state: ProofState::single(goal),
            gt_proof,
        }
    }

    pub fn goal(&self) -> &Goal {
        &self.initial_state.goals[0]
    }

    /// States visited by the ground-truth proof, starting with the initial
    /// state and ending with the last open state before `Proved`.
    pub fn gt_states(&self) -> Option<Vec<ProofState>> {
        let mut states = vec![self.initial_state.clone()];
        for (i, t) in self.gt_proof.iter().enumerate() {
            match apply_tactic(states.last().unwrap(), t) {
                StepResult::Ok(next) => states.push(next),
                StepResult::Proved if i + 1 == self.gt_proof.len() => return Some(states),
                _ => return None,
            }
        }
        None
    }

    pub fn gt_replays(&self) -> bool {
        matches!(replay(&self.initial_state, &self.gt_proof), Replay::Proved { .. })
    }
}

/// Size limits applied to ground-truth proofs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterCaps {
    pub max_proof_len: usize,
    pub max_state_chars: usize,
    pub max_tactic_chars: usize,
}

impl Default for FilterCaps {
    fn default() -> Self {
        Self {
            max_proof_len: MAX_PROOF_LEN,
            max_state_chars: 900,
            max_tactic_chars: 90,
        }
    }
}

/// Whether the ground-truth proof is short enough and every state and
/// tactic it touches fits the character caps.
pub fn filter_theorem(thm: &Theorem, caps: &FilterCaps) -> bool {
    if thm.gt_proof.len() > caps.max_proof_len {
        return false;
    }
    if thm
        .gt_proof
        .iter()
        .any(|t| t.char_len() > caps.max_tactic_chars)
    {
        return false;
    }
    match thm.gt_states() {
        Some(states) => states
            .iter()
            .all(|s| s.canonical().len() <= caps.max_state_chars),
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Template {
    Assumption,
    Identity,
    OrIntro,
    ModusPonens,
    AndElim,
    Const,
    IntroAndElim,
    IntroOrIntro,
    AndIntro,
    OrElimSame,
}

impl Template {
    fn for_len(len: usize) -> &'static [Template] {
        use Template::*;
        match len {
            1 => &[Assumption],
            2 => &[Identity, OrIntro, ModusPonens, AndElim],
            _ => &[Const, IntroAndElim, IntroOrIntro, AndIntro, OrElimSame],
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Template::Assumption => "assumption",
            Template::Identity => "identity",
            Template::OrIntro => "or_intro",
            Template::ModusPonens => "modus_ponens",
            Template::AndElim => "and_elim",
            Template::Const => "const",
            Template::IntroAndElim => "intro_and_elim",
            Template::IntroOrIntro => "intro_or_intro",
            Template::AndIntro => "and_intro",
            Template::OrElimSame => "or_elim_same",
        }
    }
}

const ATOMS: [&str; 10] = ["p", "q", "r", "s", "t", "u", "v", "w", "a", "b"];

struct FormulaSampler {
    alphabet: Vec<&'static str>,
}

impl FormulaSampler {
    fn new(rng: &mut impl Rng) -> Self {
        let size = rng.gen_range(2..=5);
        let mut alphabet: Vec<&'static str> = ATOMS.to_vec();
        alphabet.shuffle(rng);
        alphabet.truncate(size);
        Self { alphabet }
    }

    fn sample(&self, rng: &mut impl Rng, max_depth: usize) -> Formula {
        if max_depth == 0 || rng.gen_bool(0.45) {
            return Formula::atom(self.alphabet.choose(rng).unwrap());
        }
        let lhs = self.sample(rng, max_depth - 1);
        let rhs = self.sample(rng, max_depth - 1);
        match rng.gen_range(0..3) {
            0 => Formula::implies(lhs, rhs),
            1 => Formula::and(lhs, rhs),
            _ => Formula::or(lhs, rhs),
        }
    }
}

/// Inserts `f` into `hyps` at a random position and returns its 1-based index.
fn insert_random(rng: &mut impl Rng, hyps: &mut Vec<Formula>, f: Formula) -> u8 {
    let at = rng.gen_range(0..=hyps.len());
    hyps.insert(at, f);
    (at + 1) as u8
}

fn instantiate(template: Template, rng: &mut impl Rng) -> (Goal, Vec<Tactic>) {
    let sampler = FormulaSampler::new(rng);
    let a = sampler.sample(rng, 2);
    let b = sampler.sample(rng, 2);
    let n_distractors = rng.gen_range(0..=2);
    let mut hyps: Vec<Formula> = (0..n_distractors).map(|_| sampler.sample(rng, 1)).collect();

    match template {
        Template::Assumption => {
            let k = insert_random(rng, &mut hyps, a.clone());
            (Goal::new(hyps, a), vec![Tactic::exact(k)])
        }
        Template::Identity => {
            let k = hyps.len() as u8 + 1;
            (
                Goal::new(hyps, Formula::implies(a.clone(), a)),
                vec![Tactic::INTRO, Tactic::exact(k)],
            )
        }
        Template::OrIntro => {
            let k = insert_random(rng, &mut hyps, a.clone());
            if rng.gen_bool(0.5) {
                (
                    Goal::new(hyps, Formula::or(a, b)),
                    vec![Tactic::LEFT, Tactic::exact(k)],
                )
            } else {
                (
                    Goal::new(hyps, Formula::or(b, a)),
                    vec![Tactic::RIGHT, Tactic::exact(k)],
                )
            }
        }
        Template::ModusPonens => {
            let _ = insert_random(rng, &mut hyps, Formula::implies(a.clone(), b.clone()));
            let _ = insert_random(rng, &mut hyps, a.clone());
            let imp = Formula::implies(a.clone(), b.clone());
            let i = hyps.iter().position(|h| *h == imp).unwrap() as u8 + 1;
            let j = hyps.iter().position(|h| *h == a).unwrap() as u8 + 1;
            (Goal::new(hyps, b), vec![Tactic::apply(i), Tactic::exact(j)])
        }
        Template::AndElim => {
            let i = insert_random(rng, &mut hyps, Formula::and(a.clone(), b.clone()));
            // After destruct the two halves sit at the end of the context.
            let n = hyps.len() as u8;
            if rng.gen_bool(0.5) {
                (Goal::new(hyps, a), vec![Tactic::destruct(i), Tactic::exact(n)])
            } else {
                (Goal::new(hyps, b), vec![Tactic::destruct(i), Tactic::exact(n + 1)])
            }
        }
        Template::Const => {
            let k = hyps.len() as u8 + 1;
            (
                Goal::new(hyps, Formula::implies(a.clone(), Formula::implies(b, a))),
                vec![Tactic::INTRO, Tactic::INTRO, Tactic::exact(k)],
            )
        }
        Template::IntroAndElim => {
            let n = hyps.len() as u8;
            let conj = Formula::and(a.clone(), b.clone());
            if rng.gen_bool(0.5) {
                (
                    Goal::new(hyps, Formula::implies(conj, a)),
                    vec![Tactic::INTRO, Tactic::destruct(n + 1), Tactic::exact(n + 1)],
                )
            } else {
                (
                    Goal::new(hyps, Formula::implies(conj, b)),
                    vec![Tactic::INTRO, Tactic::destruct(n + 1), Tactic::exact(n + 2)],
                )
            }
        }
        Template::IntroOrIntro => {
            let k = hyps.len() as u8 + 1;
            if rng.gen_bool(0.5) {
                (
                    Goal::new(hyps, Formula::implies(a.clone(), Formula::or(a, b))),
                    vec![Tactic::INTRO, Tactic::LEFT, Tactic::exact(k)],
                )
            } else {
                (
                    Goal::new(hyps, Formula::implies(a.clone(), Formula::or(b, a))),
                    vec![Tactic::INTRO, Tactic::RIGHT, Tactic::exact(k)],
                )
            }
        }
        Template::AndIntro => {
            let _ = insert_random(rng, &mut hyps, a.clone());
            let _ = insert_random(rng, &mut hyps, b.clone());
            let i = hyps.iter().position(|h| *h == a).unwrap() as u8 + 1;
            let j = hyps.iter().position(|h| *h == b).unwrap() as u8 + 1;
            (
                Goal::new(hyps, Formula::and(a, b)),
                vec![Tactic::SPLIT, Tactic::exact(i), Tactic::exact(j)],
            )
        }
        Template::OrElimSame => {
            let k = insert_random(rng, &mut hyps, Formula::or(a.clone(), a.clone()));
            (
                Goal::new(hyps, a),
                vec![Tactic::cases(k), Tactic::exact(k), Tactic::exact(k)],
            )
        }
    }
}

/// Samples a theorem whose ground-truth proof has exactly `target_len`
/// steps, replays and filters it.
pub fn generate_theorem(rng: &mut impl Rng, target_len: usize) -> Result<Theorem, CorpusError> {
    if !(1..=MAX_PROOF_LEN).contains(&target_len) {
        return Err(CorpusError::BadLength(target_len));
    }
    let caps = FilterCaps::default();
    for _ in 0..MAX_ATTEMPTS {
        let template = *Template::for_len(target_len).choose(rng).unwrap();
        let (goal, proof) = instantiate(template, rng);
        debug_assert_eq!(proof.len(), target_len);
        let thm = Theorem::new(template.tag(), goal, proof);
        if thm.gt_replays() && filter_theorem(&thm, &caps) {
            return Ok(thm);
        }
    }
    Err(CorpusError::GenerationExhausted {
        target_len,
        attempts: MAX_ATTEMPTS,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Theorem>,
    pub valid: Vec<Theorem>,
}

fn theorem_rng(seed: u64, index: u64, retry: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(index.wrapping_add(1) ^ (retry << 32))))
}

/// Builds the 1000/20 train/valid split. Proof lengths cycle 1, 2, 3 within
/// each split and initial states are unique across the whole corpus.
pub fn build_corpus(seed: u64) -> Result<CorpusSplit, CorpusError> {
    build_corpus_sized(seed, TRAIN_SIZE, VALID_SIZE)
}

pub fn build_corpus_sized(
    seed: u64,
    train_size: usize,
    valid_size: usize,
) -> Result<CorpusSplit, CorpusError> {
    let mut seen = HashSet::new();
    let mut next = |prefix: &str, i: usize, global: u64| -> Result<Theorem, CorpusError> {
        let target_len = i % MAX_PROOF_LEN + 1;
        for retry in 0..MAX_ATTEMPTS as u64 {
            let mut rng = theorem_rng(seed, global, retry);
            let mut thm = generate_theorem(&mut rng, target_len)?;
            if seen.insert(thm.initial_state.fingerprint()) {
                thm.name = format!("{prefix}_{i:04}_{}", thm.name);
                return Ok(thm);
            }
        }
        Err(CorpusError::GenerationExhausted {
            target_len,
            attempts: MAX_ATTEMPTS,
        })
    };
    // Validation first so that its theorems never depend on the train size.
    let valid = (0..valid_size)
        .map(|i| next("valid", i, (1 << 40) + i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let train = (0..train_size)
        .map(|i| next("train", i, i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorpusSplit { train, valid })
}

#[derive(Debug, Serialize, Deserialize)]
struct TheoremRecord {
    name: String,
    goal: String,
    gt_proof: Vec<String>,
}

impl From<&Theorem> for TheoremRecord {
    fn from(thm: &Theorem) -> Self {
        Self {
            name: thm.name.clone(),
            goal: thm.goal().to_line(),
            gt_proof: thm.gt_proof.iter().map(Tactic::to_string).collect(),
        }
    }
}

/// JSON-lines rendering, one theorem per line, sorted by name.
pub fn to_jsonl(theorems: &[Theorem]) -> String {
    let mut sorted: Vec<&Theorem> = theorems.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = String::new();
    for thm in sorted {
        out.push_str(&serde_json::to_string(&TheoremRecord::from(thm)).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Theorem>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Parse {
            line: i + 1,
            message,
        };
        let rec: TheoremRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let goal = Goal::parse_line(&rec.goal).map_err(|e| err(e.to_string()))?;
        let gt_proof = rec
            .gt_proof
            .iter()
            .map(|t| t.parse::<Tactic>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        out.push(Theorem::new(rec.name, goal, gt_proof));
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Theorem>, CorpusError> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    for line in std::io::BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_jsonl(&text)
}

pub fn write_jsonl(path: &Path, theorems: &[Theorem]) -> Result<(), CorpusError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_jsonl(theorems).as_bytes())?;
    Ok(())
}

/// SHA-256 over the serialized train and valid files.
pub fn corpus_hash(split: &CorpusSplit) -> String {
    let mut hasher = Sha256::new();
    hasher.update(to_jsonl(&split.train).as_bytes());
    hasher.update(b"\0");
    hasher.update(to_jsonl(&split.valid).as_bytes());
    hex::encode(hasher.finalize())
}

/// A handful of tiny theorems whose full trajectory trees are small enough
/// to enumerate under the restricted action space at depth 2.
pub fn micro_suite() -> Vec<Theorem> {
    let parse = |s: &str| Goal::parse_line(s).expect("valid micro theorem");
    vec![
        Theorem::new("micro_identity", parse("a -> a"), vec![Tactic::INTRO, Tactic::exact(1)]),
        Theorem::new(
            "micro_curried",
            parse("(a -> b) -> a -> b"),
            vec![Tactic::INTRO, Tactic::exact(1)],
        ),
        Theorem::new(
            "micro_conj",
            parse("a & b -> a & b"),
            vec![Tactic::INTRO, Tactic::exact(1)],
        ),
        Theorem::new(
            "micro_disj",
            parse("a | b -> a | b"),
            vec![Tactic::INTRO, Tactic::exact(1)],
        ),
        Theorem::new(
            "micro_or_intro",
            parse("a |- a | b"),
            vec![Tactic::LEFT, Tactic::exact(1)],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_deterministic() {
        for len in 1..=3 {
            let a = generate_theorem(&mut ChaCha8Rng::seed_from_u64(42), len).unwrap();
            let b = generate_theorem(&mut ChaCha8Rng::seed_from_u64(42), len).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.gt_proof.len(), len);
        }
    }

    #[test]
    fn generated_theorems_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..600 {
            let thm = generate_theorem(&mut rng, i % 3 + 1).unwrap();
            assert!(thm.gt_replays(), "{thm:?}");
            assert_eq!(thm.gt_proof.len(), i % 3 + 1);
            assert_eq!(thm.initial_state.goals.len(), 1);
        }
    }

    #[test]
    fn bad_length_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_theorem(&mut rng, 4),
            Err(CorpusError::BadLength(4))
        ));
    }

    #[test]
    fn filter_rules() {
        let caps = FilterCaps::default();
        let thm = Theorem::new(
            "id",
            Goal::parse_line("a -> a").unwrap(),
            vec![Tactic::INTRO, Tactic::exact(1)],
        );
        assert!(filter_theorem(&thm, &caps));

        let long = Theorem::new(
            "long",
            Goal::parse_line("a -> b -> c -> a").unwrap(),
            vec![Tactic::INTRO, Tactic::INTRO, Tactic::INTRO, Tactic::exact(1)],
        );
        assert!(long.gt_replays());
        assert!(!filter_theorem(&long, &caps));

        // A deeply nested target pushes the printed state past the cap.
        let mut big = Formula::atom("p");
        for i in 0..200 {
            big = Formula::and(big, Formula::atom(if i % 2 == 0 { "q" } else { "r" }));
        }
        let huge = Theorem::new(
            "huge",
            Goal::from_target(Formula::implies(big.clone(), big)),
            vec![Tactic::INTRO, Tactic::exact(1)],
        );
        assert!(huge.initial_state.canonical().len() > 1200);
        assert!(huge.gt_replays());
        assert!(!filter_theorem(&huge, &caps));
    }

    #[test]
    fn jsonl_round_trip() {
        let split = build_corpus_sized(5, 30, 6).unwrap();
        let text = to_jsonl(&split.train);
        let parsed = parse_jsonl(&text).unwrap();
        let mut sorted = split.train.clone();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        assert_eq!(parsed, sorted);
        assert!(parse_jsonl("{\"name\":\"x\",\"goal\":\"a ->\",\"gt_proof\":[]}").is_err());
    }

    #[test]
    fn micro_suite_proofs_replay() {
        for thm in micro_suite() {
            assert!(thm.gt_replays(), "{}", thm.name);
        }
    }
}
