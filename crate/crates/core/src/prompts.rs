//! Prompt templates with `[TEXT]` and `<PST>` markers.
//!
//! Rendering tokenizes each literal segment of a template on its own and
//! concatenates the pieces with the sentence tokens and placeholder ids,
//! so placeholder and sentence positions are known exactly and the tokens
//! before the sentence never depend on the sentence.

use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::{TokenSequence, Vocab};

pub const TEXT_MARKER: &str = "[TEXT]";
pub const PST_MARKER: &str = "<PST>";

// Also accepted as the sentence marker.
const TEXT_MARKER_ALT: &str = "[Text]";

/// Default guidance for the knowledge-enhanced prompt.
pub const DEFAULT_KNOWLEDGE: &str = "The essence of a sentence is often captured by its main subjects and actions, while descriptive terms provide additional but less central details. With this in mind ,";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment<'a> {
    Literal(&'a str),
    Text,
    Pst,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            text: text.into(),
        }
    }

    /// PromptEOL-style template prefixed with caller-supplied guidance.
    pub fn knowledge_enhanced(guidance: &str) -> Self {
        Self::new(
            "knowledge",
            format!("{guidance} this sentence : <PST> \"[Text]\" means in one word: \""),
        )
    }

    fn segments(&self) -> Vec<Segment<'_>> {
        let mut out = Vec::new();
        let mut rest = self.text.as_str();
        loop {
            let next = [TEXT_MARKER, TEXT_MARKER_ALT, PST_MARKER]
                .iter()
                .filter_map(|m| rest.find(m).map(|at| (at, *m)))
                .min_by_key(|&(at, _)| at);
            let Some((at, marker)) = next else {
                if !rest.is_empty() {
                    out.push(Segment::Literal(rest));
                }
                return out;
            };
            if at > 0 {
                out.push(Segment::Literal(&rest[..at]));
            }
            out.push(if marker == PST_MARKER { Segment::Pst } else { Segment::Text });
            rest = &rest[at + marker.len()..];
        }
    }

    pub fn pst_marker_count(&self) -> usize {
        self.segments().iter().filter(|s| **s == Segment::Pst).count()
    }

    /// A template with nothing but markers, used for prompt-free runs.
    pub fn is_prompt_free(&self) -> bool {
        !self.segments().iter().any(|s| matches!(s, Segment::Literal(_)))
    }

    pub fn validate(&self) -> Result<()> {
        let n_text = self.segments().iter().filter(|s| **s == Segment::Text).count();
        if n_text != 1 {
            return Err(Error::Template(format!(
                "template {:?} must contain exactly one {TEXT_MARKER}, found {n_text}",
                self.name
            )));
        }
        Ok(())
    }

    /// Reads a template file: first line `name: <id>`, then the body.
    /// A single trailing newline ending the file is not part of the body.
    pub fn from_file_text(contents: &str) -> Result<Self> {
        let (first, body) = contents.split_once('\n').unwrap_or((contents, ""));
        let name = first
            .trim_end_matches('\r')
            .strip_prefix("name:")
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| Error::Template("first line must be `name: <id>`".into()))?;
        let body = body
            .strip_suffix('\n')
            .map(|b| b.strip_suffix('\r').unwrap_or(b))
            .unwrap_or(body);
        let t = Self::new(name, body);
        t.validate()?;
        Ok(t)
    }

    pub fn to_file_text(&self) -> String {
        format!("name: {}\n{}\n", self.name, self.text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file_text(&std::fs::read_to_string(path)?)
    }

    /// Looks up a built-in name, falling back to reading `spec` as a path.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(t) = builtin(spec) {
            return Ok(t);
        }
        let path = Path::new(spec);
        if path.exists() {
            return Self::load(path);
        }
        Err(Error::Template(format!(
            "{spec:?} is neither a built-in template nor a readable file"
        )))
    }
}

/// Built-in templates. The placeholder sits after the colon unless the
/// name says otherwise.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    const EOL: &str = "means in one word: \"";
    const COT: &str = "After thinking step by step ,";
    let t = PromptTemplate::new;
    vec![
        t("prompteol", format!("This sentence : <PST> \"[Text]\" {EOL}")),
        t("prompteol-pst-first", format!("<PST> This sentence : \"[Text]\" {EOL}")),
        t("prompteol-pst-in-quote", format!("This sentence : \"<PST> [Text]\" {EOL}")),
        t("prompteol-pst-after-text", format!("This sentence : \" [Text]\" <PST> {EOL}")),
        t("pretended-cot", format!("{COT} this sentence : <PST> \"[Text]\" {EOL}")),
        t("pretended-cot-pst-first", format!("{COT} <PST> this sentence :  \"[Text]\" {EOL}")),
        t("pretended-cot-pst-in-quote", format!("{COT} this sentence : \"<PST> [Text]\" {EOL}")),
        t("pretended-cot-pst-after-text", format!("{COT} this sentence : \" [Text]\" <PST> {EOL}")),
        PromptTemplate::knowledge_enhanced(DEFAULT_KNOWLEDGE),
        t("prompt-a", "The representative word for sentence <PST> '[TEXT]' is:".into()),
        t("prompt-b", "Summarize sentence <PST> '[TEXT]' in one word:".into()),
        t("prompt-c", "Given the keyword <PST>, this sentence: '[TEXT]' means in one word:".into()),
        t("prompt-d", "This sentence: <PST> and '[TEXT]' means in one word:".into()),
        t("none", "<PST>[TEXT]".into()),
    ]
}

pub fn builtin(name: &str) -> Option<PromptTemplate> {
    builtin_templates().into_iter().find(|t| t.name == name)
}

/// A tokenized prompt with its placeholder and sentence bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub seq: TokenSequence,
    /// Token range of the inserted sentence.
    pub text_span: Range<usize>,
    /// Position whose hidden state is the sentence embedding (the last token).
    pub set_index: usize,
}

impl RenderedPrompt {
    pub fn pst_positions(&self) -> &[usize] {
        self.seq.pst_positions()
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// Length of the leading run of tokens that does not depend on the
    /// sentence or on any placeholder: everything before the first
    /// placeholder or the sentence, whichever comes first.
    pub fn static_prefix_len(&self) -> usize {
        self.pst_positions()
            .first()
            .map_or(self.text_span.start, |&p| p.min(self.text_span.start))
    }
}

/// Fills `[TEXT]` with `text` and expands placeholder markers.
///
/// With `n_pst = 0` markers are dropped. With one marker it expands to
/// `n_pst` consecutive reserved ids; with several markers each becomes a
/// single id and their count must equal `n_pst`.
pub fn render(t: &PromptTemplate, text: &str, n_pst: usize, vocab: &Vocab) -> Result<RenderedPrompt> {
    t.validate()?;
    if text.is_empty() && !t.is_prompt_free() {
        return Err(Error::Template("input sentence is empty".into()));
    }
    let markers = t.pst_marker_count();
    let per_marker = match (n_pst, markers) {
        (0, _) => 0,
        (_, 0) => {
            return Err(Error::Template(format!(
                "template {:?} has no {PST_MARKER} marker but {n_pst} placeholders were requested",
                t.name
            )))
        }
        (n, 1) => n,
        (n, m) if n == m => 1,
        (n, m) => {
            return Err(Error::Template(format!(
                "template {:?} has {m} {PST_MARKER} markers but {n} placeholders were requested",
                t.name
            )))
        }
    };

    let mut ids = Vec::new();
    let mut pst_positions = Vec::new();
    let mut text_span = 0..0;
    let mut slot = 0;
    for seg in t.segments() {
        match seg {
            Segment::Literal(s) => ids.extend(vocab.encode(s)),
            Segment::Text => {
                let start = ids.len();
                ids.extend(vocab.encode(text));
                text_span = start..ids.len();
            }
            Segment::Pst => {
                for _ in 0..per_marker {
                    pst_positions.push(ids.len());
                    ids.push(vocab.pst_id(slot));
                    slot += 1;
                }
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::Template("rendered prompt is empty".into()));
    }
    let set_index = ids.len() - 1;
    Ok(RenderedPrompt {
        seq: TokenSequence::new(ids, pst_positions)?,
        text_span,
        set_index,
    })
}
