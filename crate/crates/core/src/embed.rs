//! Dense embedding interface and a deterministic character-trigram stand-in.

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Hashed character trigrams of the lowercased text, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct StubEmbedder {
    pub dims: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        StubEmbedder { dims: 256 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Embedder for StubEmbedder {
    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dims];
        let norm: Vec<char> = format!(" {} ", text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" "))
            .chars()
            .collect();
        for w in norm.windows(3) {
            let gram: String = w.iter().collect();
            v[(fnv1a(gram.as_bytes()) % self.dims as u64) as usize] += 1.0;
        }
        let len = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if len > 0.0 {
            v.iter_mut().for_each(|x| *x /= len);
        }
        v
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
