use std::collections::HashSet;
use std::path::Path;

use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::nn::EmbeddingTable;
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coverage {
    /// Distinct vocabulary entries overwritten from the file.
    pub hits: usize,
    /// File lines whose token is not in the vocabulary.
    pub misses: usize,
    pub vocab_size: usize,
}

/// Overwrites rows of `table` from a text file of `token v1 .. vD` lines.
/// A leading `count dim` header line is skipped.
pub fn load_embeddings(path: &Path, vocab: &Vocab, store: &mut ParamStore, table: &EmbeddingTable) -> Result<Coverage> {
    load_embeddings_str(&std::fs::read_to_string(path)?, vocab, store, table)
}

pub fn load_embeddings_str(text: &str, vocab: &Vocab, store: &mut ParamStore, table: &EmbeddingTable) -> Result<Coverage> {
    let dim = table.dim;
    let mut seen = HashSet::new();
    let mut misses = 0;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::Load(format!(
                "line {}: expected {} values, found {}",
                i + 1,
                dim,
                fields.len() - 1
            )));
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Load(format!("line {}: {e}", i + 1)))?;
        let Some(row) = vocab.get(fields[0]) else {
            misses += 1;
            continue;
        };
        if row >= table.vocab_size {
            continue;
        }
        store.value_mut(table.weight).data_mut()[row * dim..(row + 1) * dim].copy_from_slice(&values);
        seen.insert(row);
    }
    Ok(Coverage {
        hits: seen.len(),
        misses,
        vocab_size: vocab.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Vocab, ParamStore, EmbeddingTable) {
        let mut v = Vocab::with_specials(&[]);
        for w in ["a", "b", "c"] {
            v.add(w);
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = EmbeddingTable::new(&mut store, "emb", v.len(), 2, 0, &mut rng).unwrap();
        (v, store, t)
    }

    #[test]
    fn coverage_counts() {
        let (v, mut store, t) = setup();
        assert_eq!(load_embeddings_str("", &v, &mut store, &t).unwrap().hits, 0);
        let c = load_embeddings_str("2 2\na 1 2\nz 0 0\n", &v, &mut store, &t).unwrap();
        assert_eq!((c.hits, c.misses), (1, 1));
        assert_eq!(&store.value(t.weight).data()[2..4], &[1.0, 2.0]);
        let full = "<unk> 0 0\na 1 1\nb 1 1\nc 1 1\n";
        assert_eq!(load_embeddings_str(full, &v, &mut store, &t).unwrap().hits, v.len());
    }

    #[test]
    fn dimension_mismatch() {
        let (v, mut store, t) = setup();
        assert!(matches!(
            load_embeddings_str("a 1 2 3\n", &v, &mut store, &t),
            Err(Error::Load(_))
        ));
    }
}
