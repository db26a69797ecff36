use errag_core::sources::docs::{query_terms, Bm25Params, ChunkIndex, ChunkSizes};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

const DOCS: [&str; 3] = [
    "the cat sat on the mat",
    "the dog chased the cat",
    "a bird flew over the house and the tree",
];

/// Scores worked out by hand with k1 = 1.2, b = 0.75, idf = ln((N - df + 0.5) / (df + 0.5) + 1),
/// N = 3 and avgdl = 20 / 3.
const EXPECTED: [(&str, [f64; 3]); 3] = [
    ("cat mat", [1.5127167492731832, 0.523548346501579, 0.0]),
    ("the", [0.18891901207327955, 0.19749180757912582, 0.16715167213311505]),
    ("bird cat", [0.4900511774126154, 0.523548346501579, 0.8579818515410729]),
];

fn index(docs: &[String]) -> ChunkIndex {
    let mut idx = ChunkIndex::new(ChunkSizes::default(), Bm25Params::default());
    for (i, d) in docs.iter().enumerate() {
        idx.add_document(&format!("d{i}"), d);
    }
    idx
}

pub fn closed_form_and_monotone() -> Outcome {
    let idx = index(&DOCS.map(String::from));
    ensure(idx.children.len() == 3, || format!("{} chunks", idx.children.len()))?;
    for (q, want) in EXPECTED {
        let terms = query_terms(q);
        for (d, w) in want.iter().enumerate() {
            let got = idx.bm25_score(&terms, d);
            ensure((got - w).abs() <= 1e-9, || format!("{q:?} on doc {d}: {got} vs {w}"))?;
        }
    }

    // Replacing a filler token by a query term raises tf with length, df and N fixed.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
    for case in 0..1000 {
        let n_docs = rng.gen_range(2..6);
        let mut docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| (0..rng.gen_range(3..20)).map(|_| vocab.choose(&mut rng).unwrap().to_string()).collect())
            .collect();
        let target = rng.gen_range(0..n_docs);
        // the query term must already be in the target doc so its df does not change
        let slot = rng.gen_range(0..docs[target].len());
        docs[target][slot] = "needle".into();
        docs[target].push("filler".into());
        let before = index(&docs.iter().map(|d| d.join(" ")).collect::<Vec<_>>());
        let last = docs[target].len() - 1;
        docs[target][last] = "needle".into();
        let after = index(&docs.iter().map(|d| d.join(" ")).collect::<Vec<_>>());
        let terms = query_terms("needle");
        let (b, a) = (before.bm25_score(&terms, target), after.bm25_score(&terms, target));
        ensure(a > b, || format!("case {case}: score fell from {b} to {a} as tf grew"))?;
    }
    Ok("3-document corpus within 1e-9 on 9 scores; 1000 tf-monotone cases".into())
}
