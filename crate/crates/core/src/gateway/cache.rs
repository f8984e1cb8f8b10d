use std::collections::HashMap;
use std::sync::{Arc, PoisonError, RwLock};

use super::{GatewayError, ModelGateway};

/// Embedding cache keyed by exact text. Reads take a shared lock; misses are
/// embedded in one batched call and inserted under the write lock.
pub struct EmbeddingCache<'g> {
    gateway: &'g dyn ModelGateway,
    vectors: RwLock<HashMap<String, Arc<[f64]>>>,
}

impl<'g> EmbeddingCache<'g> {
    pub fn new(gateway: &'g dyn ModelGateway) -> Self {
        Self {
            gateway,
            vectors: RwLock::new(HashMap::new()),
        }
    }

    pub fn gateway(&self) -> &'g dyn ModelGateway {
        self.gateway
    }

    pub fn len(&self) -> usize {
        self.vectors.read().unwrap_or_else(PoisonError::into_inner).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, text: &str) -> Result<Arc<[f64]>, GatewayError> {
        Ok(self.get_many(&[text])?.remove(0))
    }

    /// Vectors for `texts`, in order.
    pub fn get_many<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Arc<[f64]>>, GatewayError> {
        let mut missing: Vec<String> = Vec::new();
        {
            let map = self.vectors.read().unwrap_or_else(PoisonError::into_inner);
            for t in texts {
                let t = t.as_ref();
                if !map.contains_key(t) && !missing.iter().any(|m| m == t) {
                    missing.push(t.to_string());
                }
            }
        }
        if !missing.is_empty() {
            let fresh = self.gateway.embed(&missing)?;
            if fresh.len() != missing.len() {
                return Err(GatewayError::MalformedResponse(format!(
                    "asked for {} embeddings, got {}",
                    missing.len(),
                    fresh.len()
                )));
            }
            let mut map = self.vectors.write().unwrap_or_else(PoisonError::into_inner);
            let dim = map.values().next().map(|v| v.len());
            for (text, vec) in missing.into_iter().zip(fresh) {
                if dim.is_some_and(|d| d != vec.values.len()) {
                    return Err(GatewayError::MalformedResponse(format!(
                        "embedding dimension {} differs from cached dimension {}",
                        vec.values.len(),
                        dim.unwrap_or_default()
                    )));
                }
                map.entry(text).or_insert_with(|| vec.values.into());
            }
        }
        let map = self.vectors.read().unwrap_or_else(PoisonError::into_inner);
        Ok(texts.iter().map(|t| Arc::clone(&map[t.as_ref()])).collect())
    }
}
