//! Templated NLI corpus with rule-derived explanations.
//!
//! Verbs come in six groups paired into opposites (motion/rest, loud/quiet,
//! work/play). The hypothesis verb is uniform over all verbs regardless of
//! label, so the hypothesis alone carries no label signal unless an artifact
//! cue is planted. The premise verb then decides the label: same group
//! entails, the opposite group contradicts, any other group is neutral.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Label, Quadruplet, Split};

/// `(descriptor, [(third person, base form)])`, opposites at indices `2k`, `2k + 1`.
pub const VERB_GROUPS: [(&str, [(&str, &str); 4]); 6] = [
    ("moving", [("runs", "run"), ("walks", "walk"), ("jogs", "jog"), ("hurries", "hurry")]),
    ("resting", [("sleeps", "sleep"), ("naps", "nap"), ("rests", "rest"), ("dozes", "doze")]),
    ("loud", [("sings", "sing"), ("shouts", "shout"), ("yells", "yell"), ("cheers", "cheer")]),
    ("quiet", [("reads", "read"), ("whispers", "whisper"), ("listens", "listen"), ("ponders", "ponder")]),
    ("working", [("works", "work"), ("builds", "build"), ("cleans", "clean"), ("repairs", "repair")]),
    ("playing", [("plays", "play"), ("dances", "dance"), ("jokes", "joke"), ("relaxes", "relax")]),
];

const SUBJECTS: [&str; 30] = [
    "man", "woman", "boy", "girl", "child", "dog", "cat", "worker", "player", "couple",
    "teacher", "student", "farmer", "chef", "doctor", "singer", "artist", "baby", "kid", "lady",
    "driver", "nurse", "pilot", "sailor", "baker", "tourist", "painter", "runner", "family", "guard",
];

const ADJECTIVES: [&str; 20] = [
    "young", "old", "tall", "small", "happy", "tired", "busy", "calm", "proud", "shy",
    "strong", "bored", "sleepy", "clever", "brave", "kind", "angry", "quick", "lonely", "cheerful",
];

const PLACES: [&str; 10] = [
    "in the park", "on the street", "at home", "near the lake", "in a room",
    "on the beach", "in the city", "at school", "by the river", "in the garden",
];

/// Hypothesis-only cue words, indexed by label id.
pub const CUES: [&str; 3] = ["today", "alone", "again"];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub split: Split,
    /// Probability that the hypothesis carries its label's cue word.
    pub artifact_strength: f64,
}

impl SynthOptions {
    pub fn new(split: Split) -> Self {
        Self {
            split,
            artifact_strength: 0.0,
        }
    }

    pub fn with_artifacts(mut self, strength: f64) -> Self {
        self.artifact_strength = strength;
        self
    }
}

struct Verb {
    group: usize,
    third: &'static str,
    base: &'static str,
}

fn verb(group: usize, k: usize) -> Verb {
    let (third, base) = VERB_GROUPS[group].1[k];
    Verb { group, third, base }
}

fn opposite(group: usize) -> usize {
    group ^ 1
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// `n` records, labels cycling entailment/contradiction/neutral so classes stay balanced within one.
pub fn synth_corpus(n: usize, seed: u64, opts: &SynthOptions) -> Vec<Quadruplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| record(Label::ALL[i % 3], &mut rng, opts))
        .collect()
}

fn record(label: Label, rng: &mut ChaCha8Rng, opts: &SynthOptions) -> Quadruplet {
    let subj = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
    let adj = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
    let place = PLACES[rng.random_range(0..PLACES.len())];
    let hv = verb(rng.random_range(0..6), rng.random_range(0..4));
    let pgroup = match label {
        Label::Entailment => hv.group,
        Label::Contradiction => opposite(hv.group),
        Label::Neutral => {
            let others: Vec<usize> = (0..6)
                .filter(|&g| g != hv.group && g != opposite(hv.group))
                .collect();
            others[rng.random_range(0..others.len())]
        }
    };
    let pv = verb(pgroup, rng.random_range(0..4));

    let premise = format!("a {adj} {subj} {} {place}", pv.third);
    let mut hypothesis = format!("the {subj} {}", hv.third);
    if opts.artifact_strength > 0.0 && rng.random::<f64>() < opts.artifact_strength {
        hypothesis.push(' ');
        hypothesis.push_str(CUES[label.id()]);
    }

    let paraphrases = explanations(label, subj, &pv, &hv);
    let explanations = match opts.split {
        Split::Train => vec![words(&paraphrases[rng.random_range(0..3)])],
        Split::Val | Split::Test => paraphrases.iter().map(|e| words(e)).collect(),
    };

    Quadruplet {
        premise: words(&premise),
        hypothesis: words(&hypothesis),
        label,
        explanations,
    }
}

fn explanations(label: Label, subj: &str, pv: &Verb, hv: &Verb) -> [String; 3] {
    let hkind = VERB_GROUPS[hv.group].0;
    match label {
        Label::Entailment => [
            format!("if the {subj} {} then the {subj} {}", pv.third, hv.third),
            format!("the {subj} {} so the {subj} is {hkind}", pv.third),
            format!("someone who {} is {hkind}", pv.third),
        ],
        Label::Contradiction => [
            format!("the {subj} can not {} and {} at the same time", pv.base, hv.base),
            format!("a {subj} that {} is not {hkind}", pv.third),
            format!("the {subj} either {} or {}", pv.third, hv.third),
        ],
        Label::Neutral => [
            format!("just because the {subj} {} does not mean the {subj} {}", pv.third, hv.third),
            format!("the {subj} may {} while it {}", hv.base, pv.third),
            format!("not every {subj} that {} also {}", pv.third, hv.third),
        ],
    }
}
