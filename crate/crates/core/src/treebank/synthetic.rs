//! Synthetic corpus of gold-labeled causal requirement trees.
//!
//! Sentences follow
//! `<keyword> <cause> [and|or <cause>]* , then <effect> [and <effect>] .`
//! where every cause and effect is a variable phrase followed by a condition
//! phrase. Each cause/effect slot draws its variable from its own lexicon, so
//! the slot index (`Cause2`, `Effect1`, ...) is recoverable from the subtree
//! alone.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{binarize, BranchingMode, ParseTree, SegmentLabel, Split, Treebank, Vocabulary};

const CAUSE_KEYWORDS: &[&[&str]] = &[&["If"], &["When"], &["As", "soon", "as"], &["In", "case"]];

const CAUSE_VARIABLES: [&[&[&str]]; 3] = [
    &[
        &["the", "system"],
        &["the", "app"],
        &["the", "server"],
        &["the", "device"],
    ],
    &[
        &["the", "user"],
        &["the", "operator"],
        &["the", "administrator"],
        &["the", "customer"],
    ],
    &[
        &["the", "sensor", "value"],
        &["the", "battery", "level"],
        &["the", "network", "connection"],
        &["the", "temperature"],
    ],
];

const CAUSE_CONDITIONS: &[&[&str]] = &[
    &["detects", "an", "error"],
    &["is", "set", "to", "true"],
    &["is", "pressed"],
    &["exceeds", "the", "threshold"],
    &["fails"],
    &["is", "unavailable"],
    &["times", "out"],
    &["receives", "a", "request"],
    &["is", "logged", "in"],
    &["is", "empty"],
];

/// (negation words, negated remainder)
const NEGATED_CONDITIONS: &[(&[&str], &[&str])] = &[
    (&["does", "not"], &["respond"]),
    (&["does", "not"], &["detect", "an", "error"]),
    (&["does", "not"], &["confirm", "the", "input"]),
    (&["is", "not"], &["available"]),
    (&["is", "not"], &["set", "to", "true"]),
    (&["is", "not"], &["valid"]),
];

const EFFECT_VARIABLES: [&[&[&str]]; 2] = [
    &[
        &["a", "warning", "window"],
        &["the", "display"],
        &["the", "log"],
        &["the", "alarm"],
    ],
    &[
        &["the", "account"],
        &["an", "email"],
        &["the", "session"],
        &["the", "report"],
    ],
];

const EFFECT_CONDITIONS: &[&[&str]] = &[
    &["shall", "be", "shown"],
    &["shall", "be", "locked"],
    &["shall", "be", "sent"],
    &["shall", "be", "updated"],
    &["shall", "be", "saved"],
    &["shall", "be", "cleared"],
    &["shall", "show", "a", "message"],
    &["shall", "restart"],
];

struct Labels {
    cause: [SegmentLabel; 3],
    effect: [SegmentLabel; 2],
    conjunction: SegmentLabel,
    disjunction: SegmentLabel,
    variable: SegmentLabel,
    condition: SegmentLabel,
    negation: SegmentLabel,
    keyword: SegmentLabel,
    sentence: SegmentLabel,
    cause_clause: SegmentLabel,
    effect_clause: SegmentLabel,
}

impl Labels {
    fn new(v: &Vocabulary) -> Self {
        let get = |name: &str| v.get(name).expect("default vocabulary label");
        Self {
            cause: [get("Cause1"), get("Cause2"), get("Cause3")],
            effect: [get("Effect1"), get("Effect2")],
            conjunction: get("Conjunction"),
            disjunction: get("Disjunction"),
            variable: get("Variable"),
            condition: get("Condition"),
            negation: get("Negation"),
            keyword: get("Keyword"),
            sentence: get("Sentence"),
            cause_clause: get("CauseClause"),
            effect_clause: get("EffectClause"),
        }
    }
}

struct SentenceBuilder<'a> {
    labels: &'a Labels,
    mode: BranchingMode,
    next_index: usize,
}

impl SentenceBuilder<'_> {
    fn leaves(&mut self, words: &[&str]) -> Vec<ParseTree> {
        words
            .iter()
            .map(|w| {
                let leaf = ParseTree::leaf(*w, self.next_index);
                self.next_index += 1;
                leaf
            })
            .collect()
    }

    fn segment(&mut self, words: &[&str], label: &SegmentLabel) -> ParseTree {
        let leaves = self.leaves(words);
        self.join(leaves, label)
    }

    fn join(&self, parts: Vec<ParseTree>, label: &SegmentLabel) -> ParseTree {
        binarize(parts, label, self.mode).expect("generated segments are non-empty and contiguous")
    }

    fn cause(&mut self, rng: &mut ChaCha8Rng, slot: usize) -> ParseTree {
        let l = self.labels;
        let variable = self.segment(CAUSE_VARIABLES[slot].choose(rng).unwrap(), &l.variable);
        let condition = if rng.random_bool(0.25) {
            let (neg, rest) = NEGATED_CONDITIONS.choose(rng).unwrap();
            let neg = self.segment(neg, &l.negation);
            let rest = self.segment(rest, &l.condition);
            self.join(vec![neg, rest], &l.condition)
        } else {
            self.segment(CAUSE_CONDITIONS.choose(rng).unwrap(), &l.condition)
        };
        self.join(vec![variable, condition], &l.cause[slot])
    }

    fn effect(&mut self, rng: &mut ChaCha8Rng, slot: usize) -> ParseTree {
        let l = self.labels;
        let variable = self.segment(EFFECT_VARIABLES[slot].choose(rng).unwrap(), &l.variable);
        let condition = self.segment(EFFECT_CONDITIONS.choose(rng).unwrap(), &l.condition);
        self.join(vec![variable, condition], &l.effect[slot])
    }

    fn sentence(&mut self, rng: &mut ChaCha8Rng) -> ParseTree {
        let l = self.labels;
        let keyword = self.segment(CAUSE_KEYWORDS.choose(rng).unwrap(), &l.keyword);

        let n_causes = match rng.random_range(0..20) {
            0..10 => 1,
            10..17 => 2,
            _ => 3,
        };
        let (connective, conn_label) = if rng.random_bool(0.5) {
            ("and", &l.conjunction)
        } else {
            ("or", &l.disjunction)
        };
        let mut causes = Vec::new();
        for slot in 0..n_causes {
            if slot > 0 {
                causes.extend(self.leaves(&[connective]));
            }
            causes.push(self.cause(rng, slot));
        }
        let causes = self.join(causes, conn_label);
        let cause_clause = self.join(vec![keyword, causes], &l.cause_clause);

        let comma = self.leaves(&[","]);
        let then = self.leaves(&["then"]);
        let n_effects = if rng.random_bool(0.3) { 2 } else { 1 };
        let mut effects = Vec::new();
        for slot in 0..n_effects {
            if slot > 0 {
                effects.extend(self.leaves(&["and"]));
            }
            effects.push(self.effect(rng, slot));
        }
        let effects = self.join(effects, &l.conjunction);
        let effect_clause = self.join(then.into_iter().chain([effects]).collect(), &l.effect_clause);
        let period = self.leaves(&["."]);

        let parts = [cause_clause]
            .into_iter()
            .chain(comma)
            .chain([effect_clause])
            .chain(period);
        self.join(parts.collect(), &l.sentence)
    }
}

/// Generates `n` gold trees with the default vocabulary. The output is a pure
/// function of `(seed, n, mode)`. The first 80% of trees are assigned to the
/// training split, the next 10% to validation and the rest to test.
pub fn generate_synthetic_corpus(seed: u64, n: usize, mode: BranchingMode) -> Treebank {
    let vocabulary = Vocabulary::default_causal();
    let labels = Labels::new(&vocabulary);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_held = n / 10;
    let n_train = n - 2 * n_held;

    let mut treebank = Treebank::new(vocabulary);
    for i in 0..n {
        let mut builder = SentenceBuilder {
            labels: &labels,
            mode,
            next_index: 0,
        };
        let tree = builder.sentence(&mut rng);
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_held {
            Split::Validation
        } else {
            Split::Test
        };
        treebank.push(tree, split).expect("generated trees are valid");
    }
    treebank
}
