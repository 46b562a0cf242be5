fn main() {
    let cfg = feedrec_core::synthgen::GeneratorConfig::default();
    let corpus = feedrec_core::synthgen::generate_corpus(&cfg).unwrap();
    let stats = feedrec_core::synthgen::corpus_stats(&corpus);
    println!("{}", serde_json::to_string_pretty(&stats.counts).unwrap());
    println!("mean dwell: {:.2}", stats.mean_dwell);
    let c = *stats.counts.get("click").unwrap() as f64;
    for k in ["share", "dislike", "finish", "quick_close"] {
        let v = *stats.counts.get(k).unwrap_or(&0) as f64;
        println!("{k}/click = {:.4}", v / c);
    }
}
