//! Deterministic synthetic data: sentences, STS pairs and labelled sets.
//!
//! Nothing here is meant to resemble real benchmark corpora. It exists so
//! tokenizer training, evaluation and timing have reproducible inputs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{LabeledExample, StsPair};

const ANIMALS: &[&str] = &[
    "cat", "dog", "horse", "rabbit", "fox", "owl", "eagle", "sparrow", "whale", "dolphin",
    "tiger", "lion", "elephant", "giraffe", "monkey", "squirrel", "turtle", "penguin", "wolf",
    "bear", "deer", "goat", "sheep", "donkey", "parrot", "salmon", "beetle", "butterfly",
];
const VEHICLES: &[&str] = &[
    "car", "truck", "bicycle", "train", "airplane", "helicopter", "boat", "submarine", "tractor",
    "motorcycle", "scooter", "ambulance", "taxi", "tram", "ferry", "rocket", "wagon", "bus",
    "sailboat", "canoe", "limousine", "van", "jeep", "glider", "yacht", "locomotive",
];
const PEOPLE: &[&str] = &[
    "teacher", "doctor", "farmer", "child", "student", "musician", "painter", "engineer",
    "gardener", "baker", "pilot", "sailor", "writer", "nurse", "soldier", "merchant", "singer",
    "dancer", "professor", "carpenter", "fisherman", "grandmother", "neighbour", "librarian",
];
const PLACES: &[&str] = &[
    "garden", "kitchen", "forest", "river", "mountain", "village", "city", "station", "market",
    "harbour", "desert", "meadow", "library", "stadium", "hospital", "bridge", "valley",
    "beach", "island", "museum", "school", "factory", "castle", "street", "airport", "theatre",
];
const VERBS: &[&str] = &[
    "runs", "jumps", "sleeps", "waits", "moves", "rests", "travels", "arrives", "stops",
    "turns", "climbs", "crosses", "follows", "watches", "passes", "leaves", "enters", "circles",
    "approaches", "disappears", "returns", "hurries", "wanders", "lingers", "glides", "races",
];
const ADJECTIVES: &[&str] = &[
    "small", "large", "quiet", "noisy", "happy", "tired", "old", "young", "bright", "dark",
    "quick", "slow", "heavy", "light", "gentle", "angry", "curious", "brave", "shiny", "dusty",
    "colourful", "ancient", "modern", "friendly", "lonely", "famous", "strange", "beautiful",
];
const ADVERBS: &[&str] = &[
    "slowly", "quickly", "quietly", "suddenly", "carefully", "happily", "eventually", "often",
    "rarely", "always", "never", "gracefully", "nervously", "patiently", "cheerfully",
];
const PREPS: &[&str] = &["near", "behind", "inside", "across", "towards", "beside", "under", "past", "around", "through"];
const TIMES: &[&str] = &[
    "in the morning", "at night", "every day", "after lunch", "before sunrise", "during the storm",
    "on weekends", "in winter", "in the summer of 1987", "around 2014", "at 6 pm", "last year",
];

/// Topic of a generated sentence; doubles as a class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topic {
    Animal,
    Vehicle,
    Person,
}

impl Topic {
    pub const ALL: [Topic; 3] = [Topic::Animal, Topic::Vehicle, Topic::Person];

    fn nouns(self) -> &'static [&'static str] {
        match self {
            Topic::Animal => ANIMALS,
            Topic::Vehicle => VEHICLES,
            Topic::Person => PEOPLE,
        }
    }
}

#[derive(Debug, Clone)]
struct Parts {
    adj: &'static str,
    noun: &'static str,
    verb: &'static str,
    adverb: Option<&'static str>,
    prep: &'static str,
    place_adj: Option<&'static str>,
    place: &'static str,
    time: Option<&'static str>,
}

impl Parts {
    fn random(rng: &mut ChaCha8Rng, topic: Topic) -> Self {
        Self {
            adj: ADJECTIVES.choose(rng).unwrap(),
            noun: topic.nouns().choose(rng).unwrap(),
            verb: VERBS.choose(rng).unwrap(),
            adverb: rng.random_bool(0.5).then(|| *ADVERBS.choose(rng).unwrap()),
            prep: PREPS.choose(rng).unwrap(),
            place_adj: rng.random_bool(0.4).then(|| *ADJECTIVES.choose(rng).unwrap()),
            place: PLACES.choose(rng).unwrap(),
            time: rng.random_bool(0.4).then(|| *TIMES.choose(rng).unwrap()),
        }
    }

    fn text(&self) -> String {
        let mut s = format!("The {} {} {}", self.adj, self.noun, self.verb);
        if let Some(a) = self.adverb {
            s.push(' ');
            s.push_str(a);
        }
        s.push_str(&format!(" {} the ", self.prep));
        if let Some(a) = self.place_adj {
            s.push_str(a);
            s.push(' ');
        }
        s.push_str(self.place);
        if let Some(t) = self.time {
            s.push(' ');
            s.push_str(t);
        }
        s.push('.');
        s
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` random sentences.
pub fn sentences(seed: u64, n: usize) -> Vec<String> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let topic = *Topic::ALL.choose(&mut r).unwrap();
            Parts::random(&mut r, topic).text()
        })
        .collect()
}

/// Made-up words built from consonant-vowel syllables. They give BPE
/// enough repeated pairs to fill a vocabulary far beyond the lexicon.
fn pseudo_words(r: &mut ChaCha8Rng, n: usize) -> String {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let words: Vec<String> = (0..n)
        .map(|_| {
            let syllables = r.random_range(1..=4);
            (0..syllables)
                .map(|_| format!("{}{}", ONSETS.choose(r).unwrap(), VOWELS.choose(r).unwrap()))
                .collect()
        })
        .collect();
    words.join(" ")
}

/// Tokenizer training text: random sentences, every lexicon entry, the
/// built-in prompt templates (so templates tokenize compactly) and a block
/// of made-up words.
pub fn corpus(seed: u64, n: usize) -> Vec<String> {
    let mut docs = sentences(seed, n);
    docs.push(pseudo_words(&mut rng(seed ^ 0x5eed), 4 * n));
    let lexicon = [ANIMALS, VEHICLES, PEOPLE, PLACES, VERBS, ADJECTIVES, ADVERBS, PREPS, TIMES];
    for list in lexicon {
        docs.push(list.join(" "));
    }
    for t in crate::prompts::builtin_templates() {
        docs.push(t.text.replace("<PST>", "").replace("[TEXT]", "").replace("[Text]", ""));
    }
    docs
}

/// Sentence pairs whose gold score is `5 × (fraction of shared slots)`.
///
/// The second sentence is a copy of the first with a random subset of its
/// eight content slots redrawn, so scores spread over `[0, 5]`.
pub fn sts_pairs(seed: u64, n: usize) -> Vec<StsPair> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let topic = *Topic::ALL.choose(&mut r).unwrap();
            let a = Parts::random(&mut r, topic);
            let fresh_topic = *Topic::ALL.choose(&mut r).unwrap();
            let fresh = Parts::random(&mut r, fresh_topic);
            let mut b = a.clone();
            let mut kept = 8;
            let mut redraw = |r: &mut ChaCha8Rng| {
                let change = r.random_bool(0.5);
                if change {
                    kept -= 1;
                }
                change
            };
            if redraw(&mut r) { b.adj = fresh.adj }
            if redraw(&mut r) { b.noun = fresh.noun }
            if redraw(&mut r) { b.verb = fresh.verb }
            if redraw(&mut r) { b.adverb = fresh.adverb }
            if redraw(&mut r) { b.prep = fresh.prep }
            if redraw(&mut r) { b.place_adj = fresh.place_adj }
            if redraw(&mut r) { b.place = fresh.place }
            if redraw(&mut r) { b.time = fresh.time }
            StsPair {
                sentence_a: a.text(),
                sentence_b: b.text(),
                gold: 5.0 * kept as f64 / 8.0,
            }
        })
        .collect()
}

/// Sentences labelled by topic (0 animal, 1 vehicle, 2 person).
pub fn topic_examples(seed: u64, n: usize) -> Vec<LabeledExample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let label = i % Topic::ALL.len();
            LabeledExample {
                text: Parts::random(&mut r, Topic::ALL[label]).text(),
                label,
            }
        })
        .collect()
}

/// Two linearly separable Gaussian blobs in 2-d, centred at (±2, ±2)
/// with spread 0.5 and a margin enforced by rejection.
pub fn separable_blobs(seed: u64, n: usize) -> Vec<(Vec<f64>, usize)> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let label = out.len() % 2;
        let centre = if label == 0 { -2.0 } else { 2.0 };
        let x: f64 = centre + r.random_range(-1.5..1.5);
        let y: f64 = centre + r.random_range(-1.5..1.5);
        // Keep a margin of 0.5 around the line x + y = 0.
        if (x + y).abs() < 0.5 || (label == 0) != (x + y < 0.0) {
            continue;
        }
        out.push((vec![x, y], label));
    }
    out
}
