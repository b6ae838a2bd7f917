//! Bootstrap descriptors from small per-class samples, then rewrite them
//! together so each one states how it differs from the rest.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::model::{name_key, normalize_name, Document, RefinementConfig, SamplingStrategy, Stage, Taxonomy, TopicDescriptor};
use crate::prompt::{descriptor_list, extract_descriptor, extract_descriptor_set, sample_block, Bindings, TemplateId};
use crate::runlog::LogEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub strategy: SamplingStrategy,
    pub n: usize,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(strategy: SamplingStrategy, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("sample size must be positive".into()));
        }
        Ok(SamplePlan { strategy, n, seed })
    }

    pub fn from_config(config: &RefinementConfig) -> Result<Self> {
        Self::new(config.sampling_strategy, config.n_bootstrap, config.seed)
    }
}

/// Picks `min(n, len)` documents. Seeded draws are without replacement and
/// keep input order.
pub fn sample_bootstrap(documents: &[Document], plan: &SamplePlan) -> Result<Vec<Document>> {
    if documents.is_empty() {
        return Err(Error::NoDocuments);
    }
    let n = plan.n.min(documents.len());
    let picked = match plan.strategy {
        SamplingStrategy::FirstN => documents[..n].to_vec(),
        SamplingStrategy::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            let mut idx = rand::seq::index::sample(&mut rng, documents.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| documents[i].clone()).collect()
        }
    };
    Ok(picked)
}

impl Engine {
    /// One descriptor summarizing `samples`.
    pub fn bootstrap_category(&self, samples: &[Document]) -> Result<TopicDescriptor> {
        if samples.is_empty() {
            return Err(Error::NoDocuments);
        }
        let block = sample_block(samples.iter().map(|d| d.text.as_str()), self.options().sample_chars);
        let request = self
            .templates()
            .render(TemplateId::TagGeneration, &Bindings::new().set("document", block))?;
        self.complete_parsed(LogEvent::new(Stage::Bootstrap, 0), &request, extract_descriptor)
    }

    /// Bootstraps one category per `(label, documents)` entry, in order.
    ///
    /// Each category remembers its dataset label. When two classes come
    /// back with the same name the later one gets `_<label>` appended.
    pub fn bootstrap_taxonomy(&self, classes: &[(String, Vec<Document>)], plan: &SamplePlan) -> Result<Taxonomy> {
        let generated = self.map(classes, |(label, docs)| {
            let samples = sample_bootstrap(docs, plan)?;
            self.bootstrap_category(&samples).map(|d| (label.clone(), d))
        });
        let mut taxonomy = Taxonomy::new();
        for result in generated {
            let (label, mut descriptor) = result?;
            if taxonomy.contains(descriptor.name()) {
                let base = format!("{}_{}", descriptor.name(), normalize_name(&label)?);
                let mut name = base.clone();
                let mut k = 2;
                while taxonomy.contains(&name) {
                    name = format!("{base}_{k}");
                    k += 1;
                }
                tracing::warn!(label = %label, name = %name, "bootstrap name collision");
                descriptor.topic_name = name;
            }
            let name = descriptor.topic_name.clone();
            taxonomy.upsert(descriptor, Stage::Bootstrap, 0);
            taxonomy.set_source_label(&name, &label)?;
        }
        Ok(taxonomy)
    }

    /// Rewrites every description in light of the others. Only replies whose
    /// name matches a category of the prompted batch are applied, so the
    /// name set and order never change.
    pub fn contrast_taxonomy(&self, taxonomy: &Taxonomy) -> Result<Taxonomy> {
        self.contrast_at(taxonomy, 0)
    }

    pub(crate) fn contrast_at(&self, taxonomy: &Taxonomy, iteration: u32) -> Result<Taxonomy> {
        if taxonomy.len() < 2 {
            return Err(Error::Precondition("contrast needs at least two categories".into()));
        }
        let batch_size = self.options().contrast_batch_size.max(2);
        let categories = taxonomy.categories();
        let batches: Vec<&[crate::model::Category]> = categories.chunks(batch_size).collect();
        let all_names = taxonomy.names().join(", ");

        let replies = self.map(&batches, |batch| {
            let mut block = descriptor_list(batch.iter().map(|c| c.descriptor()));
            if batches.len() > 1 {
                block.push_str(&format!("\n\nAll categories in the taxonomy: {all_names}"));
            }
            let request = self
                .templates()
                .render(TemplateId::Contrast, &Bindings::new().set("category", block))?;
            self.complete_parsed(LogEvent::new(Stage::Contrast, iteration), &request, |reply| {
                let found = extract_descriptor_set(reply)?;
                // a reply naming none of the batch is as useless as prose
                let keys: HashSet<String> = batch.iter().map(|c| name_key(c.name())).collect();
                if found.iter().any(|d| keys.contains(&name_key(d.name()))) {
                    Ok(found)
                } else {
                    Err(Error::ContrastDroppedAll)
                }
            })
        });

        let mut out = taxonomy.clone();
        for (batch, reply) in batches.iter().zip(replies) {
            let descriptors = reply?;
            let mut done = HashSet::new();
            for d in descriptors {
                let key = name_key(d.name());
                let Some(category) = batch.iter().find(|c| name_key(c.name()) == key) else {
                    tracing::warn!(name = %d.name(), "contrast reply names an unknown category; ignored");
                    self.log()
                        .record(LogEvent::new(Stage::Contrast, iteration).category(d.name()).ok(false).note("unknown name ignored"));
                    continue;
                };
                if !done.insert(key) {
                    tracing::warn!(name = %d.name(), "contrast reply repeats a category; later copy ignored");
                    continue;
                }
                let name = category.name().to_string();
                out.upsert(
                    TopicDescriptor {
                        topic_name: name.clone(),
                        topic_description: d.topic_description,
                    },
                    Stage::Contrast,
                    iteration,
                );
                self.log().record(LogEvent::new(Stage::Contrast, iteration).category(&name));
            }
        }
        Ok(out)
    }
}
