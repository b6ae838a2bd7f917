//! User-authored categories: add a new one or rewrite an existing one from
//! a rough natural-language description.

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{Document, Provenance, Stage, Taxonomy, TopicDescriptor};
use crate::runlog::LogEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicOptions {
    /// Re-contrast the whole taxonomy afterwards.
    pub run_contrast: bool,
    /// Example documents for the topic, if the user has any.
    pub sample_docs: Vec<Document>,
}

impl Default for TopicOptions {
    fn default() -> Self {
        TopicOptions {
            run_contrast: true,
            sample_docs: Vec::new(),
        }
    }
}

impl Engine {
    /// Enriches `user` through the refinement prompt and appends it as a
    /// user-defined category. On error the input taxonomy is unchanged.
    pub fn add_topic(&self, user: &TopicDescriptor, taxonomy: &Taxonomy, options: &TopicOptions) -> Result<Taxonomy> {
        if taxonomy.contains(user.name()) {
            return Err(Error::DuplicateName(user.name().to_string()));
        }
        let enriched = self.enrich(user, options)?;
        let mut out = taxonomy.clone();
        out.insert(enriched, Provenance::UserDefined, Stage::Hitl, 0)?;
        self.finish(out, options)
    }

    /// Replaces the description of `name` with an enriched version of
    /// `new_description`. The name never changes.
    pub fn revise_topic(
        &self,
        name: &str,
        new_description: &str,
        taxonomy: &Taxonomy,
        options: &TopicOptions,
    ) -> Result<Taxonomy> {
        let category = taxonomy
            .get(name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))?;
        let rough = TopicDescriptor::new(category.name(), new_description)?;
        let enriched = self.enrich(&rough, options)?;
        let mut out = taxonomy.clone();
        out.upsert(enriched, Stage::Hitl, 0);
        self.finish(out, options)
    }

    fn enrich(&self, rough: &TopicDescriptor, options: &TopicOptions) -> Result<TopicDescriptor> {
        let exemplars: Vec<&str> = options.sample_docs.iter().map(|d| d.text.as_str()).collect();
        self.misclass_prompt(rough, &exemplars, &[], LogEvent::new(Stage::Hitl, 0))
    }

    fn finish(&self, taxonomy: Taxonomy, options: &TopicOptions) -> Result<Taxonomy> {
        if options.run_contrast && taxonomy.len() >= 2 {
            self.contrast_at(&taxonomy, 0)
        } else {
            Ok(taxonomy)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::MockBackend;

    fn base() -> Taxonomy {
        let mut t = Taxonomy::new();
        t.upsert(TopicDescriptor::new("Network", "vpn proxy wifi").unwrap(), Stage::Bootstrap, 0);
        t.upsert(TopicDescriptor::new("Login", "password account locked").unwrap(), Stage::Bootstrap, 0);
        t
    }

    fn quiet() -> TopicOptions {
        TopicOptions {
            run_contrast: false,
            ..TopicOptions::default()
        }
    }

    fn engine() -> Engine {
        Engine::new(Arc::new(MockBackend::new()))
    }

    #[test]
    fn add_without_contrast_only_appends() {
        let t = base();
        let user = TopicDescriptor::new(
            "Cloud Infrastructure_Issues",
            "EC2 instance not launching and Azure VM connectivity failure",
        )
        .unwrap();
        let out = engine().add_topic(&user, &t, &quiet()).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(&out.categories()[..2], t.categories());
        let added = &out.categories()[2];
        assert_eq!(added.name(), "Cloud_Infrastructure_Issues");
        assert_eq!(added.provenance(), Provenance::UserDefined);
        assert_eq!(added.history()[0].stage, Stage::Hitl);
    }

    #[test]
    fn add_with_exemplars_and_contrast() {
        let options = TopicOptions {
            run_contrast: true,
            sample_docs: vec![Document::new("1", "kubernetes pod crash loop")],
        };
        let user = TopicDescriptor::new("Cloud", "cloud hosting outages").unwrap();
        let out = engine().add_topic(&user, &base(), &options).unwrap();
        let added = out.get("Cloud").unwrap();
        assert!(added.description().contains("kubernetes"));
        assert!(out.categories().iter().all(|c| c.history().last().unwrap().stage == Stage::Contrast));
    }

    #[test]
    fn duplicate_names_are_refused() {
        let user = TopicDescriptor::new("network", "anything").unwrap();
        assert!(matches!(engine().add_topic(&user, &base(), &quiet()), Err(Error::DuplicateName(_))));
    }

    #[test]
    fn revise_keeps_name_and_grows_history() {
        let out = engine()
            .revise_topic("login", "password resets and locked accounts", &base(), &quiet())
            .unwrap();
        let c = out.get("Login").unwrap();
        assert_eq!(c.name(), "Login");
        assert_eq!(c.history().len(), 2);
        assert_eq!(c.description(), "password resets and locked accounts");
        assert!(matches!(
            engine().revise_topic("Billing", "x", &base(), &quiet()),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn revision_changes_the_winner() {
        let e = engine();
        let doc = Document::new("1", "invoice refund overdue");
        let before = e.classify(&doc, &base()).unwrap().predicted;
        assert_eq!(before, "Network");
        let revised = e
            .revise_topic("Login", "invoice refund payment", &base(), &quiet())
            .unwrap();
        assert_eq!(e.classify(&doc, &revised).unwrap().predicted, "Login");
    }
}
