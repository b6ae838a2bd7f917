//! Deterministic offline stand-in for an instruction-following LLM.
//!
//! Label scoring is keyword overlap: for each candidate, the number of
//! distinct content words shared by the document and the candidate's
//! description, divided by the number of distinct content words in the
//! description. Content words are lowercase alphanumeric runs minus a small
//! stopword list.
//!
//! Completions are fixed templates keyed by the directive phrases of the
//! built-in prompts:
//!
//! * `DESCRIBE:k1,k2,...` anywhere in the prompt yields a descriptor naming
//!   those keywords.
//! * tag generation summarizes the `> ` sample lines into a descriptor built
//!   from their eight most frequent content words.
//! * contrast echoes every input descriptor with a fixed exclusion sentence.
//! * misclassification refinement appends up to six keywords from the sample
//!   lines that the current description lacks.
//! * pair adaptation rewrites the description from the twelve most frequent
//!   sample keywords plus a fixed exclusion sentence.
//!
//! Anything else gets a prose refusal, which the extractors reject.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde_json::json;

use super::{check_candidates, BackendCapabilities, BackendError, LlmBackend, PromptRequest, ScoreMap, ScoringPath};
use crate::prompt::extract_descriptor_set;

const TAG_MARKER: &str = "Generate a single, highly relevant tag";
const CONTRAST_MARKER: &str = "emphasize the contrast between all categories";
const REFINE_MARKER: &str = "refine a category tag based on correctly classified";
const ADAPT_MARKER: &str = "Strengthen the distinction between";
const DESCRIBE_MARKER: &str = "DESCRIBE:";

const REFINE_WRONG_SECTION: &str = "Misclassified data";
const ADAPT_WRONG_SECTION: &str = "Miscategorized Content";

const CONTRAST_SENTENCE: &str = "This is different from other classes because it covers none of their themes.";
const ADAPT_SENTENCE: &str = "Unlike the confused category, it excludes that vocabulary.";
const REFUSAL: &str = "The mock backend has no template for this prompt.";

const TAG_KEYWORDS: usize = 8;
const REFINE_KEYWORDS: usize = 6;
const ADAPT_KEYWORDS: usize = 12;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "an", "and", "any", "are", "as", "at", "be", "been", "before", "but",
    "by", "for", "from", "had", "has", "have", "he", "her", "his", "in", "into", "is", "it", "its", "of",
    "on", "or", "other", "over", "she", "some", "than", "that", "the", "their", "then", "there", "these",
    "they", "this", "those", "to", "under", "was", "were", "which", "while", "with",
];

/// Lowercase alphanumeric words of `text`, stopwords removed, in order.
pub fn content_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| STOPWORDS.binary_search(&w.as_str()).is_err())
        .collect()
}

fn word_set(text: &str) -> HashSet<String> {
    content_words(text).into_iter().collect()
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    seed: u64,
    label_noise: f64,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Fraction of classification prompts (chosen by a hash of seed and
    /// prompt) where a pseudo-random candidate receives a +1 bonus.
    pub fn with_label_noise(mut self, rate: f64) -> Self {
        self.label_noise = rate.clamp(0.0, 1.0);
        self
    }

    fn prompt_hash(&self, text: &str) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(text.as_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
    }

    fn respond(&self, prompt: &str) -> String {
        if let Some(keywords) = describe_marker(prompt) {
            return descriptor_json(&keywords);
        }
        if prompt.contains(CONTRAST_MARKER) {
            return contrast_reply(prompt);
        }
        if prompt.contains(REFINE_MARKER) {
            return refine_reply(prompt);
        }
        if prompt.contains(ADAPT_MARKER) {
            return adapt_reply(prompt);
        }
        if prompt.contains(TAG_MARKER) {
            let samples = sample_lines(prompt);
            return descriptor_json(&top_keywords(&samples, TAG_KEYWORDS, &HashSet::new()));
        }
        REFUSAL.to_string()
    }
}

impl LlmBackend for MockBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            supports_label_scoring: true,
            model_id: "mock".into(),
        }
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        request.validate()?;
        Ok(self.respond(&request.full_text()))
    }

    fn score_labels(&self, request: &PromptRequest, candidates: &[String]) -> Result<ScoreMap, BackendError> {
        request.validate()?;
        check_candidates(candidates)?;
        let prompt = request.full_text();
        let (descriptions, document) = parse_classify_prompt(&prompt, candidates);
        let doc_words = word_set(document);

        let mut scores: IndexMap<String, f64> = candidates
            .iter()
            .zip(&descriptions)
            .map(|(c, desc)| {
                let desc = word_set(desc.unwrap_or(""));
                let score = if desc.is_empty() {
                    0.0
                } else {
                    desc.intersection(&doc_words).count() as f64 / desc.len() as f64
                };
                (c.clone(), score)
            })
            .collect();

        if self.label_noise > 0.0 {
            let h = self.prompt_hash(&prompt);
            if (h as f64 / u64::MAX as f64) < self.label_noise {
                let i = ((h >> 11) % candidates.len() as u64) as usize;
                scores[i] += 1.0;
            }
        }

        Ok(ScoreMap {
            scores,
            path: ScoringPath::Mock,
        })
    }
}

/// Splits the built-in classification prompt into the description listed
/// for each candidate (aligned with `candidates`) and the document text.
fn parse_classify_prompt<'a>(prompt: &'a str, candidates: &[String]) -> (Vec<Option<&'a str>>, &'a str) {
    let mut out = vec![None; candidates.len()];
    let Some(start) = prompt.find("Categories:\n") else {
        return (out, "");
    };
    let rest = &prompt[start + "Categories:\n".len()..];
    let (section, document) = match rest.find("\n\nDocument:\n") {
        Some(i) => {
            let doc = &rest[i + "\n\nDocument:\n".len()..];
            let doc = match doc.rfind("\n\nRespond with") {
                Some(j) => &doc[..j],
                None => doc,
            };
            (&rest[..i], doc)
        }
        None => (rest, ""),
    };
    for line in section.lines() {
        let Some(entry) = line.strip_prefix("- ") else {
            continue;
        };
        for (slot, c) in out.iter_mut().zip(candidates) {
            if slot.is_none() {
                *slot = entry.strip_prefix(c.as_str()).and_then(|r| r.strip_prefix(": "));
            }
        }
    }
    (out, document)
}

fn describe_marker(prompt: &str) -> Option<Vec<String>> {
    let start = prompt.find(DESCRIBE_MARKER)? + DESCRIBE_MARKER.len();
    let list = prompt[start..].split_whitespace().next().unwrap_or("");
    let keywords: Vec<String> = list
        .split(',')
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect();
    Some(keywords)
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn descriptor_json(keywords: &[String]) -> String {
    let (name, description) = if keywords.is_empty() {
        ("General_Topic".to_string(), "Documents without a dominant theme.".to_string())
    } else {
        let name = keywords.iter().take(2).map(|k| title_case(k)).collect::<Vec<_>>().join("_");
        (name, format!("Documents concerning {}.", keywords.join(", ")))
    };
    json!({ "topic_name": name, "topic_description": description }).to_string()
}

fn sample_lines(text: &str) -> Vec<&str> {
    text.lines()
        .filter_map(|l| l.trim_start().strip_prefix("> "))
        .collect()
}

/// Sample lines before and after the section heading `wrong_heading`.
fn split_samples<'a>(prompt: &'a str, wrong_heading: &str) -> (Vec<&'a str>, Vec<&'a str>) {
    match prompt.find(wrong_heading) {
        Some(i) => (sample_lines(&prompt[..i]), sample_lines(&prompt[i..])),
        None => (sample_lines(prompt), Vec::new()),
    }
}

/// Content words ranked by how many texts contain them, ties alphabetical.
fn top_keywords(texts: &[&str], k: usize, exclude: &HashSet<String>) -> Vec<String> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        for w in word_set(t) {
            *freq.entry(w).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().filter(|(w, _)| !exclude.contains(w)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(w, _)| w).collect()
}

fn real_descriptors(prompt: &str) -> Vec<crate::model::TopicDescriptor> {
    extract_descriptor_set(prompt).unwrap_or_default()
}

fn contrast_reply(prompt: &str) -> String {
    let descriptors = real_descriptors(prompt);
    if descriptors.is_empty() {
        return REFUSAL.to_string();
    }
    descriptors
        .iter()
        .map(|d| {
            let description = if d.topic_description.contains(CONTRAST_SENTENCE) {
                d.topic_description.clone()
            } else {
                format!("{} {}", d.topic_description, CONTRAST_SENTENCE)
            };
            json!({ "topic_name": format!(" {} ", d.topic_name), "topic_description": description }).to_string()
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn refine_reply(prompt: &str) -> String {
    let Some(current) = real_descriptors(prompt).into_iter().next() else {
        return REFUSAL.to_string();
    };
    let (right, wrong) = split_samples(prompt, REFINE_WRONG_SECTION);
    let mut texts = wrong.clone();
    texts.extend(right);
    let known = word_set(&current.topic_description);
    let added = top_keywords(&texts, REFINE_KEYWORDS, &known);
    let description = if added.is_empty() {
        current.topic_description.clone()
    } else {
        format!("{} Also covers {}.", current.topic_description, added.join(", "))
    };
    json!({ "topic_name": current.topic_name, "topic_Description": description }).to_string()
}

fn adapt_reply(prompt: &str) -> String {
    let name = prompt
        .split("belonging to ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .map(|n| n.trim_end_matches('.'))
        .unwrap_or("Adapted_Category");
    let (right, wrong) = split_samples(prompt, ADAPT_WRONG_SECTION);
    let mut texts = right;
    texts.extend(wrong);
    let keywords = top_keywords(&texts, ADAPT_KEYWORDS, &HashSet::new());
    if keywords.is_empty() {
        return REFUSAL.to_string();
    }
    let description = format!("Documents concerning {}. {}", keywords.join(", "), ADAPT_SENTENCE);
    json!({ "topic_name": name, "topic_Description": description }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::extract_descriptor;

    #[test]
    fn stopwords_are_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn content_words_lowercase_and_drop_stopwords() {
        assert_eq!(content_words("The VPN, and a Proxy-server!"), ["vpn", "proxy", "server"]);
    }

    #[test]
    fn describe_marker_names_the_keywords() {
        let mock = MockBackend::new();
        let out = mock.complete(&PromptRequest::new("please DESCRIBE:login,password now")).unwrap();
        let d = extract_descriptor(&out).unwrap();
        assert_eq!(d.topic_name, "Login_Password");
        assert_eq!(d.topic_description, "Documents concerning login, password.");
        assert_eq!(out, mock.complete(&PromptRequest::new("please DESCRIBE:login,password now")).unwrap());
    }

    #[test]
    fn unknown_prompt_gets_refusal() {
        let out = MockBackend::new().complete(&PromptRequest::new("hello")).unwrap();
        assert_eq!(out, REFUSAL);
    }

    #[test]
    fn empty_request_rejected_before_any_work() {
        let err = MockBackend::new().complete(&PromptRequest::new("")).unwrap_err();
        assert!(matches!(err, BackendError::InvalidRequest(_)));
    }

    fn classify_prompt(doc: &str, cats: &[(&str, &str)]) -> PromptRequest {
        let block = cats.iter().map(|(n, d)| format!("- {n}: {d}")).collect::<Vec<_>>().join("\n");
        PromptRequest::new(format!(
            "Classify.\n\nCategories:\n{block}\n\nDocument:\n{doc}\n\nRespond with one name."
        ))
    }

    #[test]
    fn overlap_scoring_by_hand() {
        // A shares login, password, reset (3 of 4 words); B shares none.
        let req = classify_prompt(
            "I cannot login after the password reset",
            &[("A", "login password reset token"), ("B", "printer toner paper")],
        );
        let names = vec!["A".to_string(), "B".to_string()];
        let s = MockBackend::new().score_labels(&req, &names).unwrap();
        assert_eq!(s.get("A"), Some(0.75));
        assert_eq!(s.get("B"), Some(0.0));
        assert_eq!(s.path, ScoringPath::Mock);
    }

    #[test]
    fn scores_cover_exactly_the_candidates() {
        let req = classify_prompt("x", &[("A", "a")]);
        let names = vec!["A".to_string(), "Z".to_string()];
        let s = MockBackend::new().score_labels(&req, &names).unwrap();
        assert_eq!(s.scores.keys().collect::<Vec<_>>(), ["A", "Z"]);
        assert_eq!(
            MockBackend::new().score_labels(&req, &[]).unwrap_err(),
            BackendError::NoCandidates
        );
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let req = classify_prompt("alpha", &[("A", "alpha"), ("B", "beta"), ("C", "gamma")]);
        let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let m = MockBackend::new().with_seed(9).with_label_noise(1.0);
        let a = m.score_labels(&req, &names).unwrap();
        let b = m.score_labels(&req, &names).unwrap();
        assert_eq!(a, b);
        assert!(a.scores.values().sum::<f64>() >= 2.0);
    }

    #[test]
    fn tag_generation_uses_most_frequent_words() {
        let prompt = PromptRequest::new(
            "> login failed password\n> password expired login\n> login locked".to_string(),
        )
        .with_system(format!("{TAG_MARKER}."));
        let out = MockBackend::new().complete(&prompt).unwrap();
        let d = extract_descriptor(&out).unwrap();
        assert_eq!(d.topic_name, "Login_Password");
        assert!(d.topic_description.starts_with("Documents concerning login, password, "));
    }
}
