//! Synthetic SQuAD-style corpus generator.
//!
//! Produces deterministic multi-sentence contexts with a learnable
//! cue-word-to-answer-entity mapping: each answer entity is paired with a
//! unique cue word that appears in the question. Used by the acceptance
//! experiment, the CLI selftest, and benchmarks; no real dataset download
//! is needed to exercise the full pipeline.

use crate::corpus::{GoldAnswer, QAExample};
use crate::rng::{stream_seed, DetRng, SeedPart};
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_examples: usize,
    pub seed: u64,
    pub n_entities: usize,
    pub n_fillers: usize,
    /// Sentences per context.
    pub n_sentences: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_examples: 100,
            seed: 1,
            n_entities: 36,
            n_fillers: 48,
            n_sentences: 3,
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ba", "do", "ke", "lu", "mi", "no", "pa", "ri", "su", "ta", "ve", "zo", "fa", "gi", "hu", "wo",
];

fn make_word(rng: &mut DetRng, taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = 2 + rng.below(2);
        let w: String = (0..syllables)
            .map(|_| SYLLABLES[rng.below(SYLLABLES.len())])
            .collect();
        // invented words must not collide with each other or with the
        // function-word lexicon (deletions would then touch content)
        if !taken.contains(&w) && !crate::perturb::FunctionWordLexicon::default().contains(&w) {
            taken.insert(w.clone());
            return w;
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut chars = w.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

struct Pools {
    /// Entity surface forms, 1 or 2 capitalized tokens.
    entities: Vec<String>,
    /// One cue word per entity, appearing only in questions.
    cues: Vec<String>,
    fillers: Vec<String>,
}

fn build_pools(cfg: &SynthConfig) -> Pools {
    let mut rng = DetRng::new(stream_seed(&[
        SeedPart::Int(cfg.seed),
        SeedPart::Str("pools"),
    ]));
    let mut taken = HashSet::new();
    let entities = (0..cfg.n_entities)
        .map(|i| {
            let first = capitalize(&make_word(&mut rng, &mut taken));
            if i % 5 < 2 {
                // two-token entity: exercises multi-token answer spans
                format!("{first} {}", capitalize(&make_word(&mut rng, &mut taken)))
            } else {
                first
            }
        })
        .collect();
    let cues = (0..cfg.n_entities)
        .map(|_| make_word(&mut rng, &mut taken))
        .collect();
    let fillers = (0..cfg.n_fillers)
        .map(|_| make_word(&mut rng, &mut taken))
        .collect();
    Pools {
        entities,
        cues,
        fillers,
    }
}

/// Generates `cfg.n_examples` examples. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> Vec<QAExample> {
    let pools = build_pools(cfg);
    (0..cfg.n_examples).map(|i| make_example(cfg, &pools, i)).collect()
}

/// Generates a train/dev pair drawn from the *same* word pools (so dev is
/// in-vocabulary) but from disjoint example streams. `cfg.n_examples` is
/// ignored.
pub fn generate_split(
    cfg: &SynthConfig,
    n_train: usize,
    n_dev: usize,
) -> (Vec<QAExample>, Vec<QAExample>) {
    let pools = build_pools(cfg);
    let all: Vec<QAExample> = (0..n_train + n_dev)
        .map(|i| make_example(cfg, &pools, i))
        .collect();
    let mut train = all;
    let dev = train.split_off(n_train);
    (train, dev)
}

fn make_example(cfg: &SynthConfig, pools: &Pools, index: usize) -> QAExample {
    let mut rng = DetRng::new(stream_seed(&[
        SeedPart::Int(cfg.seed),
        SeedPart::Str("example"),
        SeedPart::Int(index as u64),
    ]));
    let answer_entity = rng.below(pools.entities.len());
    let mut distractors = Vec::new();
    while distractors.len() < 2 {
        let d = rng.below(pools.entities.len());
        if d != answer_entity && !distractors.contains(&d) {
            distractors.push(d);
        }
    }
    let answer_sentence = rng.below(cfg.n_sentences);
    let filler = |rng: &mut DetRng| pools.fillers[rng.below(pools.fillers.len())].clone();

    let mut context = String::new();
    let mut char_start = 0;
    for s in 0..cfg.n_sentences {
        if s > 0 {
            context.push(' ');
        }
        let entity = if s == answer_sentence {
            Some(pools.entities[answer_entity].as_str())
        } else {
            distractors
                .get(s % distractors.len())
                .map(|&d| pools.entities[d].as_str())
        };
        let f1 = filler(&mut rng);
        let f2 = filler(&mut rng);
        let f3 = filler(&mut rng);
        let f4 = filler(&mut rng);
        match entity {
            Some(name) => {
                let head = format!("The {f1} {f2} of ");
                if s == answer_sentence {
                    char_start = context.chars().count() + head.chars().count();
                }
                context.push_str(&head);
                context.push_str(name);
                context.push_str(&format!(" held the {f3} near the {f4}."));
            }
            None => {
                context.push_str(&format!("The {f1} {f2} moved to the {f3} with some {f4}."));
            }
        }
    }
    let qf1 = filler(&mut rng);
    let qf2 = filler(&mut rng);
    let cue = &pools.cues[answer_entity];
    let question = format!("Which {qf1} did the {cue} {qf2} hold at the game?");

    QAExample {
        id: format!("synth-{}-{index}", cfg.seed),
        title: Some("synth".into()),
        context,
        question,
        answers: vec![GoldAnswer {
            text: pools.entities[answer_entity].clone(),
            char_start,
        }],
    }
}
