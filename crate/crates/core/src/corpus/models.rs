//! Model metadata: identity, knowledge cutoff, release ordering and
//! temperature capability.

use serde::{Deserialize, Serialize};

use crate::similarity::Temperature;

use super::CorpusError;

/// One chat model version as the campaign and analysis see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Stable id used in store paths and report files.
    pub id: String,
    /// Name sent on the wire.
    pub api_name: String,
    /// ISO date of the newest training data.
    pub knowledge_cutoff: String,
    /// ISO release date.
    pub release_date: String,
    /// Whether the API accepts a temperature-0 request for this model.
    pub supports_temperature_zero: bool,
    /// Position in the release sequence, 0-based, consistent with
    /// `release_date` order.
    pub release_order: u32,
}

impl ModelSpec {
    pub fn supports(&self, temperature: Temperature) -> bool {
        match temperature {
            Temperature::Zero => self.supports_temperature_zero,
            Temperature::One => true,
        }
    }
}

/// Known models, kept sorted by release order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelRegistry {
    models: Vec<ModelSpec>,
}

fn id_is_path_safe(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The ChatGPT versions the experiment design targets, in release order.
    /// GPT-5 is the one version whose API pins temperature at 1.
    pub fn builtin() -> Self {
        let mut registry = Self::new();
        let rows: [(&str, &str, &str, bool); 7] = [
            ("gpt-3.5-turbo", "2021-09-01", "2022-11-30", true),
            ("gpt-4-turbo", "2023-12-01", "2024-04-09", true),
            ("gpt-4o", "2024-06-01", "2024-05-13", true),
            ("gpt-4.1", "2024-06-01", "2025-04-15", true),
            ("gpt-5", "2024-09-30", "2025-08-07", false),
            ("gpt-5.1", "2024-09-30", "2025-11-12", true),
            ("gpt-5.2", "2025-08-30", "2025-12-11", true),
        ];
        for (order, (id, cutoff, release, temp0)) in rows.into_iter().enumerate() {
            registry
                .insert(ModelSpec {
                    id: id.to_string(),
                    api_name: id.to_string(),
                    knowledge_cutoff: cutoff.to_string(),
                    release_date: release.to_string(),
                    supports_temperature_zero: temp0,
                    release_order: order as u32,
                })
                .expect("builtin registry is consistent");
        }
        registry
    }

    /// Add a model, enforcing unique path-safe ids, unique release orders and
    /// order/date consistency against the models already present.
    pub fn insert(&mut self, spec: ModelSpec) -> Result<(), CorpusError> {
        if !id_is_path_safe(&spec.id) {
            return Err(CorpusError::InvalidModelId { id: spec.id });
        }
        if self.models.iter().any(|m| m.id == spec.id) {
            return Err(CorpusError::DuplicateModelId { id: spec.id });
        }
        for existing in &self.models {
            let order_before = spec.release_order < existing.release_order;
            let date_before = spec.release_date < existing.release_date;
            if existing.release_order == spec.release_order
                || (order_before != date_before && spec.release_date != existing.release_date)
            {
                return Err(CorpusError::InconsistentReleaseOrder {
                    id: spec.id,
                    other: existing.id.clone(),
                });
            }
        }
        self.models.push(spec);
        self.models.sort_by_key(|m| m.release_order);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelSpec> {
        self.models.iter()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Model ids in release order.
    pub fn release_order_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    /// Subset lookup preserving release order; unknown ids are an error.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&ModelSpec>, CorpusError> {
        let mut selected = Vec::with_capacity(ids.len());
        for id in ids {
            selected.push(self.get(id).ok_or_else(|| CorpusError::UnknownModel {
                id: id.clone(),
            })?);
        }
        selected.sort_by_key(|m| m.release_order);
        Ok(selected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_matches_the_release_history() {
        let registry = ModelRegistry::builtin();
        assert_eq!(registry.len(), 7);
        let ids = registry.release_order_ids();
        assert_eq!(ids[0], "gpt-3.5-turbo");
        assert_eq!(ids[6], "gpt-5.2");
        // Release dates strictly increase along the release order.
        let dates: Vec<&str> = registry.iter().map(|m| m.release_date.as_str()).collect();
        for pair in dates.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn gpt5_is_the_temperature_locked_model() {
        let registry = ModelRegistry::builtin();
        assert!(!registry.get("gpt-5").unwrap().supports(Temperature::Zero));
        assert!(registry.get("gpt-5").unwrap().supports(Temperature::One));
        assert!(registry.get("gpt-5.1").unwrap().supports(Temperature::Zero));
    }

    #[test]
    fn shared_cutoff_dates_exist() {
        let registry = ModelRegistry::builtin();
        assert_eq!(
            registry.get("gpt-4o").unwrap().knowledge_cutoff,
            registry.get("gpt-4.1").unwrap().knowledge_cutoff
        );
        assert_eq!(
            registry.get("gpt-5").unwrap().knowledge_cutoff,
            registry.get("gpt-5.1").unwrap().knowledge_cutoff
        );
    }

    #[test]
    fn inconsistent_order_is_rejected() {
        let mut registry = ModelRegistry::builtin();
        let err = registry
            .insert(ModelSpec {
                id: "late-but-first".into(),
                api_name: "x".into(),
                knowledge_cutoff: "2026-01-01".into(),
                release_date: "2026-01-01".into(),
                supports_temperature_zero: true,
                release_order: 0,
            })
            .unwrap_err();
        assert!(matches!(err, CorpusError::InconsistentReleaseOrder { .. }));
    }

    #[test]
    fn path_hostile_ids_are_rejected() {
        let mut registry = ModelRegistry::new();
        let err = registry
            .insert(ModelSpec {
                id: "bad/id".into(),
                api_name: "x".into(),
                knowledge_cutoff: "2026-01-01".into(),
                release_date: "2026-01-01".into(),
                supports_temperature_zero: true,
                release_order: 0,
            })
            .unwrap_err();
        assert!(matches!(err, CorpusError::InvalidModelId { .. }));
    }

    #[test]
    fn select_sorts_by_release_order() {
        let registry = ModelRegistry::builtin();
        let picked = registry
            .select(&["gpt-5.1".to_string(), "gpt-3.5-turbo".to_string()])
            .unwrap();
        assert_eq!(picked[0].id, "gpt-3.5-turbo");
        assert_eq!(picked[1].id, "gpt-5.1");
        assert!(registry.select(&["nope".to_string()]).is_err());
    }
}
