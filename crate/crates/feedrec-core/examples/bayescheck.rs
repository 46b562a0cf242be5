// Oracle ceiling: AUC when candidates are scored by their true latent
// affinity, on the chronological test quarter.
use feedrec_core::metrics::{click_metrics, RankedCandidate, RankedImpression};
use feedrec_core::synthgen::{generate_corpus_full, GeneratorConfig};
use std::collections::HashMap;

fn main() {
    let cfg = GeneratorConfig::default();
    let (corpus, _, shown) = generate_corpus_full(&cfg).unwrap();
    let mut z: HashMap<(String, String), f64> = HashMap::new();
    for s in shown {
        z.insert((s.impression_id, s.news_id), s.affinity_z);
    }
    let mut imps = corpus.impressions.clone();
    imps.sort_by_key(|i| i.timestamp);
    let test = &imps[imps.len() * 3 / 4..];
    let ranked: Vec<RankedImpression> = test
        .iter()
        .map(|imp| RankedImpression {
            impression_id: imp.impression_id.clone(),
            candidates: imp
                .shown_news
                .iter()
                .map(|n| RankedCandidate {
                    news_id: n.clone(),
                    score: z[&(imp.impression_id.clone(), n.clone())],
                    clicked: imp.clicked.contains(n),
                    shared: false,
                    disliked: false,
                    finished: false,
                    dwell_time: None,
                })
                .collect(),
        })
        .collect();
    let m = click_metrics(&ranked);
    println!("oracle AUC {:.4} MRR {:.4} over {} impressions", m.auc, m.mrr, test.len());
}
