//! Templated corpora in which a trigger's event type is recoverable from its
//! labelled dependents.
//!
//! Every sentence is a verb with three core dependents plus noise modifiers.
//! In the default variant the event type is the word class of the `nsubj`
//! dependent; the `dobj` and `nmod` dependents are drawn from the same noun
//! pool and the dependents appear in random order, so the subject can only be
//! told apart from the other two through its label. In the label-blind variant
//! all nouns come from one pool and the event type is the *set* of labels on
//! the three core dependents; words and tree shape carry no type signal.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Head, Sentence, Trigger};
use crate::error::{Error, Result};

/// Generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub event_types: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub nouns_per_type: usize,
    pub trigger_verbs: usize,
    pub other_verbs: usize,
    /// Probability that a sentence carries an event.
    pub event_rate: f64,
    /// Probability that a trigger is verb + particle (a two-token span).
    pub multiword_rate: f64,
    pub label_blind: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            event_types: 5,
            train: 2000,
            dev: 300,
            test: 300,
            min_len: 6,
            max_len: 14,
            nouns_per_type: 8,
            trigger_verbs: 12,
            other_verbs: 8,
            event_rate: 0.85,
            multiword_rate: 0.2,
            label_blind: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub event_types: Vec<String>,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

const CORE_ROLES: [&str; 6] = ["nsubj", "dobj", "nmod", "iobj", "xcomp", "ccomp"];
const NOISE_LABELS: [&str; 31] = [
    "amod", "det", "nummod", "compound", "nmod:poss", "acl", "appos", "cc", "conj", "advmod", "neg",
    "aux", "auxpass", "cop", "mark", "discourse", "expl", "parataxis", "dep", "csubj", "nsubjpass",
    "advcl", "acl:relcl", "det:predet", "nmod:tmod", "nmod:npmod", "mwe", "goeswith", "list",
    "vocative", "fixed",
];
const TYPE_NAMES: [&str; 8] = [
    "Meet", "Attack", "Transport", "Die", "Elect", "Arrest-Jail", "Transfer-Money", "Start-Org",
];

fn type_name(k: usize) -> String {
    TYPE_NAMES
        .get(k)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Event-{k}"))
}

/// Label triples for the label-blind variant, as indices into the core roles.
fn signatures() -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..CORE_ROLES.len() {
        for b in a + 1..CORE_ROLES.len() {
            for c in b + 1..CORE_ROLES.len() {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Generates a train/dev/test corpus. Identical `(spec, seed)` pairs give
/// identical output.
pub fn gen_synthetic(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    if spec.event_types == 0 {
        return Err(Error::Argument("synthetic corpus needs at least one event type".into()));
    }
    let sigs = signatures();
    if spec.label_blind && spec.event_types > sigs.len() {
        return Err(Error::Argument(format!(
            "label-blind variant supports at most {} event types",
            sigs.len()
        )));
    }
    let base = if spec.multiword_rate > 0.0 { 6 } else { 5 };
    if spec.min_len < base || spec.max_len < spec.min_len {
        return Err(Error::Argument(format!(
            "length range [{}, {}] must start at {base} or more",
            spec.min_len, spec.max_len
        )));
    }
    if spec.nouns_per_type == 0 || spec.trigger_verbs == 0 || spec.other_verbs == 0 {
        return Err(Error::Argument("word pools must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = |count: usize| -> Vec<Sentence> {
        (0..count).map(|_| sentence(spec, &sigs, &mut rng)).collect()
    };
    let train = gen(spec.train);
    let dev = gen(spec.dev);
    let test = gen(spec.test);
    Ok(SyntheticCorpus {
        event_types: (0..spec.event_types).map(type_name).collect(),
        train,
        dev,
        test,
    })
}

struct Unit {
    /// Tokens in surface order: (word, entity tag, label, head slot).
    tokens: Vec<(String, String, &'static str, Slot)>,
}

#[derive(Clone, Copy)]
enum Slot {
    Root,
    /// Attached to the verb.
    Verb,
    /// Attached to the `i`-th core dependent.
    Core(usize),
}

fn sentence(spec: &SynthSpec, sigs: &[[usize; 3]], rng: &mut ChaCha8Rng) -> Sentence {
    let event = rng.gen_bool(spec.event_rate);
    let etype = rng.gen_range(0..spec.event_types);
    let multiword = event && rng.gen_bool(spec.multiword_rate);

    let verb = if event {
        format!("trig{}", rng.gen_range(0..spec.trigger_verbs))
    } else {
        format!("verb{}", rng.gen_range(0..spec.other_verbs))
    };

    let roles: [&'static str; 3] = if spec.label_blind {
        let sig = sigs[if event { etype } else { rng.gen_range(0..spec.event_types) }];
        [CORE_ROLES[sig[0]], CORE_ROLES[sig[1]], CORE_ROLES[sig[2]]]
    } else {
        ["nsubj", "dobj", "nmod"]
    };
    let pool = spec.event_types * spec.nouns_per_type;
    let core_words: Vec<(String, String)> = roles
        .iter()
        .map(|&role| {
            if spec.label_blind {
                (format!("noun{}", rng.gen_range(0..pool)), "B-ENT".to_string())
            } else {
                let class = if role == "nsubj" && event {
                    etype
                } else {
                    rng.gen_range(0..spec.event_types)
                };
                (format!("n{class}_{}", rng.gen_range(0..spec.nouns_per_type)), format!("B-C{class}"))
            }
        })
        .collect();

    let mut verb_unit = Unit {
        tokens: vec![(verb, "O".to_string(), "root", Slot::Root)],
    };
    if multiword {
        let prt = format!("prt{}", rng.gen_range(0..3));
        verb_unit.tokens.push((prt, "O".to_string(), "compound:prt", Slot::Verb));
    }
    let mut core_units: Vec<Unit> = core_words
        .into_iter()
        .zip(roles)
        .map(|((w, tag), role)| Unit {
            tokens: vec![(w, tag, role, Slot::Verb)],
        })
        .collect();
    let mut verb_mods: Vec<Unit> = Vec::new();

    let target = rng.gen_range(spec.min_len..=spec.max_len);
    let mut count = verb_unit.tokens.len() + 3 + 1;
    while count < target {
        let label = NOISE_LABELS[rng.gen_range(0..NOISE_LABELS.len())];
        let word = format!("{}{}", label.replace(':', "_"), rng.gen_range(0..2));
        if rng.gen_bool(0.2) {
            verb_mods.push(Unit {
                tokens: vec![(word, "O".to_string(), label, Slot::Verb)],
            });
        } else {
            let c = rng.gen_range(0..3);
            core_units[c].tokens.insert(0, (word, "O".to_string(), label, Slot::Core(c)));
        }
        count += 1;
    }

    // Surface order: units shuffled, punctuation last.
    let mut order: Vec<(usize, Unit)> = Vec::new();
    order.push((usize::MAX, verb_unit));
    order.extend(core_units.into_iter().enumerate());
    order.extend(verb_mods.into_iter().map(|u| (usize::MAX - 1, u)));
    order.shuffle(rng);

    let mut tokens = Vec::new();
    let mut entity_tags = Vec::new();
    let mut labels = Vec::new();
    let mut slots = Vec::new();
    let mut verb_pos = 0;
    let mut core_pos = [0usize; 3];
    for (tag, unit) in &order {
        for (k, (w, e, l, s)) in unit.tokens.iter().enumerate() {
            let pos = tokens.len();
            if *tag == usize::MAX && k == 0 {
                verb_pos = pos;
            }
            if *tag < 3 && k + 1 == unit.tokens.len() {
                core_pos[*tag] = pos;
            }
            tokens.push(w.clone());
            entity_tags.push(e.clone());
            labels.push(l.to_string());
            slots.push(*s);
        }
    }
    tokens.push(".".to_string());
    entity_tags.push("O".to_string());
    labels.push("punct".to_string());
    slots.push(Slot::Verb);

    let heads = slots
        .iter()
        .map(|s| match *s {
            Slot::Root => Head::Root,
            Slot::Verb => Head::Token(verb_pos),
            Slot::Core(c) => Head::Token(core_pos[c]),
        })
        .collect();
    let triggers = if event {
        let end = verb_pos + if multiword { 2 } else { 1 };
        vec![Trigger::new(verb_pos, end, type_name(etype))]
    } else {
        Vec::new()
    };
    Sentence {
        tokens,
        entity_tags,
        heads,
        dep_labels: labels,
        triggers,
    }
}
