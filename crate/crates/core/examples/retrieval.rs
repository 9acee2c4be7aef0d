//! Composition retrieval: embed annotated line sets, query by Euclidean
//! distance with a score filter, and cluster with k-means.
//!
//! cargo run --example retrieval

use semline::applications::{kmeans_cluster, retrieve, RetrievalEntry, DEFAULT_SCORE_THRESHOLD};
use semline::cli::annotation_embedding;
use semline::io::AnnotationRecord;
use semline::maps::{DEFAULT_GRID, DEFAULT_POOL};
use std::f64::consts::FRAC_PI_2;

use semline::{Frame, Line};

fn main() -> semline::Result<()> {
    let frame = Frame::new(320, 240)?;
    let compositions: [(&str, Vec<Line>, f64); 6] = [
        ("horizon_low", vec![Line::new(60.0, FRAC_PI_2)], 0.9),
        ("horizon_lower", vec![Line::new(70.0, FRAC_PI_2)], 0.85),
        ("horizon_high", vec![Line::new(-60.0, FRAC_PI_2)], 0.95),
        ("vertical", vec![Line::new(0.0, 0.0)], 0.8),
        ("triangle", vec![Line::new(20.0, 0.6), Line::new(20.0, 2.5)], 0.9),
        ("weak_horizon", vec![Line::new(62.0, FRAC_PI_2)], 0.5),
    ];
    let mut index = Vec::new();
    for (id, lines, score) in &compositions {
        let rec = AnnotationRecord::from_lines(*id, &frame, lines)?;
        index.push(RetrievalEntry {
            identifier: id.to_string(),
            embedding: annotation_embedding(&rec, 4, DEFAULT_GRID, DEFAULT_POOL)?,
            composition_score: *score,
        });
    }

    let query = index[0].clone();
    let others: Vec<RetrievalEntry> = index[1..].to_vec();
    println!("query {}:", query.identifier);
    for hit in retrieve(&query, &others, DEFAULT_SCORE_THRESHOLD, 3)? {
        println!("  {:14} {:.4}", hit.identifier, hit.distance);
    }

    let vectors: Vec<Vec<f64>> = index.iter().map(|e| e.embedding.clone()).collect();
    let km = kmeans_cluster(&vectors, 3, 42, 50)?;
    println!("k-means objective per iteration {:.4?}", km.objective_history);
    for (e, c) in index.iter().zip(&km.assignments) {
        println!("  {:14} cluster {c}", e.identifier);
    }
    Ok(())
}
