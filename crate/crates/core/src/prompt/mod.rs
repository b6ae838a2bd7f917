//! Prompt templates for every pipeline stage, and descriptor extraction from
//! model replies.
//!
//! Placeholders are written `{name}`; `{{` and `}}` render as literal braces.
//! Bound values are inserted as-is and never re-scanned.

mod extract;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::PromptRequest;
use crate::model::{Taxonomy, TopicDescriptor};

pub use extract::{extract_descriptor, extract_descriptor_set};

/// Bumped whenever a built-in template text changes.
pub const TEMPLATE_VERSION: u32 = 1;

/// Default per-sample character budget in sample blocks.
pub const DEFAULT_SAMPLE_CHARS: usize = 500;

/// Placeholder text for an empty sample block.
pub const EMPTY_BLOCK: &str = "(none)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    TagGeneration,
    Contrast,
    InterClassAdapt,
    MisclassRefine,
    IntraClassDiff,
    Classify,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::TagGeneration,
        TemplateId::Contrast,
        TemplateId::InterClassAdapt,
        TemplateId::MisclassRefine,
        TemplateId::IntraClassDiff,
        TemplateId::Classify,
    ];

    /// File name looked up in a template override directory.
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::TagGeneration => "tag_generation.txt",
            TemplateId::Contrast => "contrast.txt",
            TemplateId::InterClassAdapt => "inter_class_adapt.txt",
            TemplateId::MisclassRefine => "misclass_refine.txt",
            TemplateId::IntraClassDiff => "intra_class_diff.txt",
            TemplateId::Classify => "classify.txt",
        }
    }

    fn builtin_text(self) -> &'static str {
        match self {
            TemplateId::TagGeneration => include_str!("../../templates/tag_generation.txt"),
            TemplateId::Contrast => include_str!("../../templates/contrast.txt"),
            TemplateId::InterClassAdapt => include_str!("../../templates/inter_class_adapt.txt"),
            TemplateId::MisclassRefine => include_str!("../../templates/misclass_refine.txt"),
            TemplateId::IntraClassDiff => include_str!("../../templates/intra_class_diff.txt"),
            TemplateId::Classify => include_str!("../../templates/classify.txt"),
        }
    }

    fn max_output_tokens(self) -> u32 {
        match self {
            TemplateId::Classify => 32,
            TemplateId::Contrast => 4096,
            _ => 1024,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

/// Substitutes `{name}` placeholders; fails on the first unbound one.
pub fn fill(template: &str, bindings: &Bindings) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if let Some(name) = placeholder_at(tail) {
            let value = bindings
                .get(name)
                .ok_or_else(|| Error::UnboundPlaceholder(name.to_string()))?;
            out.push_str(value);
            rest = &tail[name.len() + 2..];
            continue;
        }
        out.push_str(&tail[..1]);
        rest = &tail[1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn placeholder_at(text: &str) -> Option<&str> {
    let body = text.strip_prefix('{')?;
    let end = body.find('}')?;
    let name = &body[..end];
    let mut chars = name.chars();
    let first = chars.next()?;
    let valid = (first.is_ascii_alphabetic() || first == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    valid.then_some(name)
}

/// One sample per line, each prefixed `> `, flattened to a single line and
/// cut to `budget` characters. Empty input renders as `(none)`.
pub fn sample_block<'a>(texts: impl IntoIterator<Item = &'a str>, budget: usize) -> String {
    let lines: Vec<String> = texts
        .into_iter()
        .map(|t| {
            let flat = t.split_whitespace().collect::<Vec<_>>().join(" ");
            let cut: String = flat.chars().take(budget).collect();
            format!("> {cut}")
        })
        .collect();
    if lines.is_empty() {
        EMPTY_BLOCK.to_string()
    } else {
        lines.join("\n")
    }
}

/// `- name: description` lines in taxonomy order; descriptions are never
/// truncated.
pub fn descriptor_block(taxonomy: &Taxonomy) -> String {
    taxonomy
        .categories()
        .iter()
        .map(|c| {
            let desc = c.description().split_whitespace().collect::<Vec<_>>().join(" ");
            format!("- {}: {desc}", c.name())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Descriptors as JSON objects, one per line.
pub fn descriptor_list<'a>(descriptors: impl IntoIterator<Item = &'a TopicDescriptor>) -> String {
    descriptors
        .into_iter()
        .map(TopicDescriptor::to_json)
        .collect::<Vec<_>>()
        .join("\n")
}

/// The six stage templates, built-in or overridden from a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    texts: [String; 6],
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet {
            texts: TemplateId::ALL.map(|id| id.builtin_text().to_string()),
        }
    }

    /// Built-in templates, replaced by `<dir>/<id>.txt` where such a file
    /// exists.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "template directory not found"),
            ));
        }
        let mut set = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.is_file() {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                set.texts[id.index()] = text;
            }
        }
        Ok(set)
    }

    pub fn with_override(mut self, id: TemplateId, text: impl Into<String>) -> Self {
        self.texts[id.index()] = text.into();
        self
    }

    pub fn text(&self, id: TemplateId) -> &str {
        &self.texts[id.index()]
    }

    /// SHA-256 over the version and every template text.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(TEMPLATE_VERSION.to_le_bytes());
        for t in &self.texts {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<PromptRequest> {
        let text = self.text(id);
        let request = match id {
            // The tag prompt is the system message; the samples are the user turn.
            TemplateId::TagGeneration => {
                let samples = bindings
                    .get("document")
                    .ok_or_else(|| Error::UnboundPlaceholder("document".into()))?;
                if samples.trim().is_empty() || samples == EMPTY_BLOCK {
                    return Err(Error::Precondition("tag generation needs at least one sample".into()));
                }
                PromptRequest::new(samples).with_system(fill(text, bindings)?)
            }
            TemplateId::Classify => {
                let user = fill(text, bindings)?;
                if bindings.get("descriptor_block").is_some_and(|b| b.trim().is_empty()) {
                    return Err(Error::Precondition("classification needs at least one category".into()));
                }
                if bindings.get("document").is_some_and(|d| d.trim().is_empty()) {
                    return Err(Error::Precondition("document text is empty".into()));
                }
                PromptRequest::new(user)
            }
            _ => PromptRequest::new(fill(text, bindings)?),
        };
        Ok(request.with_max_output_tokens(id.max_output_tokens()))
    }

    /// Classification prompt for one document against every category.
    pub fn classify_request(&self, document: &str, taxonomy: &Taxonomy) -> Result<PromptRequest> {
        if taxonomy.is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        let bindings = Bindings::new()
            .set("document", document)
            .set("descriptor_block", descriptor_block(taxonomy));
        self.render(TemplateId::Classify, &bindings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stage;

    #[test]
    fn fill_substitutes_and_unescapes() {
        let b = Bindings::new().set("x", "{raw}").set("y", "2");
        assert_eq!(fill("a {x} b {{y}} {y}}}", &b).unwrap(), "a {raw} b {y} 2}");
        assert_eq!(fill("json { \"k\": 1 }", &b).unwrap(), "json { \"k\": 1 }");
    }

    #[test]
    fn fill_reports_unbound_names() {
        let err = fill("hello {who}", &Bindings::new()).unwrap_err();
        assert!(matches!(err, Error::UnboundPlaceholder(n) if n == "who"));
    }

    #[test]
    fn tag_generation_prompt_carries_instruction_and_samples() {
        let tickets: Vec<String> = (0..20).map(|i| format!("ticket {i}: cannot login")).collect();
        let block = sample_block(tickets.iter().map(String::as_str), DEFAULT_SAMPLE_CHARS);
        let req = TemplateSet::builtin()
            .render(TemplateId::TagGeneration, &Bindings::new().set("document", block))
            .unwrap();
        let system = req.system_text.as_deref().unwrap();
        assert!(system.contains("Generate a single, highly relevant tag"));
        assert!(system.contains("\"topic_Description\": \"<topicDescription>\"\n}"));
        assert!(!system.contains("{{"));
        assert_eq!(req.user_text.lines().count(), 20);
        assert!(req.user_text.contains("> ticket 19: cannot login"));
        assert_eq!(req.temperature, 0.0);
    }

    #[test]
    fn every_stage_template_carries_its_directive() {
        let t = TemplateSet::builtin();
        assert!(t.text(TemplateId::Contrast).contains("emphasize the contrast between all categories"));
        assert!(t.text(TemplateId::InterClassAdapt).contains("Strengthen the distinction between"));
        assert!(t
            .text(TemplateId::MisclassRefine)
            .contains("refine a category tag based on correctly classified and misclassified"));
        assert!(t.text(TemplateId::MisclassRefine).contains("Do not change the original topic name."));
        assert!(t.text(TemplateId::IntraClassDiff).contains("Strengthen the distinction between"));
    }

    #[test]
    fn inter_class_adapt_needs_wrong_category() {
        let b = Bindings::new()
            .set("df_subset_right", "> a")
            .set("df_subset_wrong", "> b")
            .set("correct_category", "A");
        let err = TemplateSet::builtin().render(TemplateId::InterClassAdapt, &b).unwrap_err();
        assert!(matches!(err, Error::UnboundPlaceholder(n) if n == "wrong_category"));
    }

    #[test]
    fn classify_against_empty_taxonomy_is_refused() {
        let t = TemplateSet::builtin();
        assert!(matches!(t.classify_request("doc", &Taxonomy::new()), Err(Error::EmptyTaxonomy)));
        let b = Bindings::new().set("document", "doc").set("descriptor_block", "");
        assert!(matches!(t.render(TemplateId::Classify, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn classify_lists_categories_in_order() {
        let mut tax = Taxonomy::new();
        for (n, d) in [("Sports", "games"), ("Business", "markets and\nmoney")] {
            tax.upsert(TopicDescriptor::new(n, d).unwrap(), Stage::Bootstrap, 0);
        }
        let req = TemplateSet::builtin().classify_request("the match", &tax).unwrap();
        assert!(req
            .user_text
            .contains("Categories:\n- Sports: games\n- Business: markets and money\n\nDocument:\nthe match\n"));
        assert_eq!(req.max_output_tokens, 32);
    }

    #[test]
    fn rendering_is_pure() {
        let t = TemplateSet::builtin();
        let b = Bindings::new().set("category", "{\"topic_name\":\"A\",\"topic_description\":\"x\"}");
        assert_eq!(
            t.render(TemplateId::Contrast, &b).unwrap(),
            t.render(TemplateId::Contrast, &b).unwrap()
        );
    }

    #[test]
    fn sample_block_truncates_and_flattens() {
        let long = "x".repeat(900);
        let block = sample_block(["a\nb", long.as_str()], 500);
        let lines: Vec<_> = block.lines().collect();
        assert_eq!(lines[0], "> a b");
        assert_eq!(lines[1].chars().count(), 502);
        assert_eq!(sample_block(std::iter::empty(), 500), EMPTY_BLOCK);
    }

    #[test]
    fn overrides_are_read_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("classify.txt"), "Pick one of:\n{descriptor_block}\n\n{document}").unwrap();
        let t = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(t.text(TemplateId::Classify), "Pick one of:\n{descriptor_block}\n\n{document}");
        assert_eq!(t.text(TemplateId::Contrast), TemplateSet::builtin().text(TemplateId::Contrast));
        assert_ne!(t.fingerprint(), TemplateSet::builtin().fingerprint());
        assert!(TemplateSet::from_dir(dir.path().join("missing")).is_err());
    }
}
