//! Prompt construction: instruction, demonstrations and the tested sample,
//! rendered as one text and packed into a chat message list.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, SentimentTuple, Subtask};
use crate::store::sha256_hex;

const BUILTIN_TEMPLATES: &str = include_str!("../templates/prompts.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template file: {0}")]
    Template(String),
    #[error("example {id}: {subtask} needs an aspect input")]
    MissingAspect { id: String, subtask: Subtask },
    #[error("example {id} belongs to {found}, prompt is for {expected}")]
    SubtaskMismatch { id: String, expected: Subtask, found: Subtask },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub subtask: Subtask,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub example_id: String,
    pub input_text: String,
    pub output_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: InstructionTemplate,
    pub demonstrations: Vec<Demonstration>,
    pub test_input: String,
    pub full_text: String,
    body_offset: usize,
}

impl PromptBundle {
    pub fn subtask(&self) -> Subtask {
        self.instruction.subtask
    }

    pub fn is_zero_shot(&self) -> bool {
        self.demonstrations.is_empty()
    }

    /// Everything after the instruction: demonstrations and the tested sample.
    pub fn body(&self) -> &str {
        &self.full_text[self.body_offset..]
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.full_text.as_bytes())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Layout {
    demonstrations_header: String,
    demonstration: String,
    separator: String,
    query: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubtaskTemplate {
    instruction: String,
    input: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    version: u32,
    layout: Layout,
    subtasks: BTreeMap<String, SubtaskTemplate>,
}

/// A validated template set: one instruction and input pattern per subtask
/// plus the shared layout.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    version: u32,
    layout: Layout,
    subtasks: BTreeMap<Subtask, SubtaskTemplate>,
    hash: String,
}

impl PromptTemplates {
    /// The template file shipped with the crate.
    pub fn builtin() -> &'static PromptTemplates {
        static BUILTIN: OnceLock<PromptTemplates> = OnceLock::new();
        BUILTIN.get_or_init(|| Self::from_toml_str(BUILTIN_TEMPLATES).expect("builtin templates are valid"))
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(source: &str) -> Result<Self, PromptError> {
        let file: TemplateFile = toml::from_str(source).map_err(|e| PromptError::Template(e.to_string()))?;
        let bad = |msg: String| Err(PromptError::Template(msg));
        let mut subtasks = BTreeMap::new();
        for (name, template) in file.subtasks {
            let subtask: Subtask =
                name.parse().map_err(|_| PromptError::Template(format!("unknown subtask {name}")))?;
            if !template.input.contains("{sentence}") {
                return bad(format!("{subtask} input lacks {{sentence}}"));
            }
            if template.input.contains("{aspect}") != subtask.aspect_conditioned() {
                return bad(format!("{subtask} input must contain {{aspect}} iff the subtask is aspect-conditioned"));
            }
            let lowered = template.instruction.to_lowercase();
            if let Some(missing) = subtask.output_elements().iter().find(|e| !lowered.contains(e.label())) {
                return bad(format!("{subtask} instruction does not mention {}", missing.label()));
            }
            subtasks.insert(subtask, template);
        }
        if let Some(missing) = Subtask::ALL.iter().find(|s| !subtasks.contains_key(s)) {
            return bad(format!("no template for {missing}"));
        }
        let layout = file.layout;
        if !layout.demonstration.contains("{input}") || !layout.demonstration.contains("{output}") {
            return bad("layout.demonstration needs {input} and {output}".into());
        }
        if !layout.query.contains("{input}") || layout.query.contains("{output}") {
            return bad("layout.query needs {input} and must not contain {output}".into());
        }
        Ok(PromptTemplates { version: file.version, layout, subtasks, hash: sha256_hex(source.as_bytes()) })
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// SHA-256 of the template source, recorded in manifests.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn instruction_for(&self, subtask: Subtask) -> InstructionTemplate {
        InstructionTemplate { subtask, text: self.subtasks[&subtask].instruction.clone() }
    }

    /// Renders the input side of an example: the sentence, plus the aspect for
    /// ALSC and AOE.
    pub fn render_input(&self, example: &Example, subtask: Subtask) -> Result<String, PromptError> {
        let template = &self.subtasks[&subtask].input;
        let aspect = match (&example.given_aspect, subtask.aspect_conditioned()) {
            (Some(a), true) => a.as_str(),
            (None, true) => return Err(PromptError::MissingAspect { id: example.id.clone(), subtask }),
            (_, false) => "",
        };
        Ok(fill(template, &[("sentence", &example.sentence), ("aspect", aspect)]))
    }

    pub fn demonstration(&self, example: &Example) -> Result<Demonstration, PromptError> {
        Ok(Demonstration {
            example_id: example.id.clone(),
            input_text: self.render_input(example, example.subtask)?,
            output_text: render_output(&example.gold, example.subtask),
        })
    }

    /// Instruction, then the demonstrations in the given order, then the
    /// tested sample with an empty output slot.
    pub fn build_prompt(
        &self,
        subtask: Subtask,
        demos: &[&Example],
        test: &Example,
    ) -> Result<PromptBundle, PromptError> {
        if let Some(other) = std::iter::once(test).chain(demos.iter().copied()).find(|e| e.subtask != subtask) {
            return Err(PromptError::SubtaskMismatch { id: other.id.clone(), expected: subtask, found: other.subtask });
        }
        let demonstrations = demos.iter().map(|d| self.demonstration(d)).collect::<Result<Vec<_>, _>>()?;
        let test_input = self.render_input(test, subtask)?;
        let instruction = self.instruction_for(subtask);

        let sep = &self.layout.separator;
        let mut full_text = instruction.text.clone();
        full_text.push_str(sep);
        let body_offset = full_text.len();
        if !demonstrations.is_empty() {
            full_text.push_str(&self.layout.demonstrations_header);
            full_text.push_str(sep);
            for demo in &demonstrations {
                full_text.push_str(&fill(
                    &self.layout.demonstration,
                    &[("input", &demo.input_text), ("output", &demo.output_text)],
                ));
                full_text.push_str(sep);
            }
        }
        full_text.push_str(&fill(&self.layout.query, &[("input", &test_input)]));

        Ok(PromptBundle { instruction, demonstrations, test_input, full_text, body_offset })
    }
}

/// Two-dimensional list of double-quoted strings, inner order following the
/// subtask's output elements, outer order following `tuples`.
pub fn render_output(tuples: &[SentimentTuple], subtask: Subtask) -> String {
    let rows: Vec<Vec<String>> = tuples.iter().map(|t| t.fields(subtask.output_elements())).collect();
    serde_json::to_string(&rows).expect("string lists always serialize")
}

/// The whole prompt as a single user message.
pub fn render_chat(bundle: &PromptBundle) -> Vec<ChatMessage> {
    vec![ChatMessage { role: Role::User, content: bundle.full_text.clone() }]
}

/// Single-pass `{name}` substitution; values are never re-scanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match values.iter().find(|(name, _)| after.starts_with(name) && after[name.len()..].starts_with('}')) {
            Some((name, value)) => {
                out.push_str(value);
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
