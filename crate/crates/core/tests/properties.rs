//! Randomized property tests for the document model, the sorrifier, and the
//! no-progress normalizer.

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mechanic_core::document::ProofDocument;
use mechanic_core::gateway::{script_key, Gateway, ScriptedBackend};
use mechanic_core::pipeline::detect_no_progress;
use mechanic_core::sorrifier::sorrify;
use mechanic_core::testkit::{random_nested_document, seeded_chain_proof};

proptest! {
    /// Sorrifying a seeded chain proof needs at most one patch per seeded
    /// error and leaves the sorries exactly at the corrupted steps.
    #[test]
    fn sorrifier_patches_each_seeded_error_once(seed in 0u64..1000, steps in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let errors = 1 + (seed as usize) % steps;
        let proof = seeded_chain_proof(&mut rng, steps, errors);
        let gateway = Gateway::with_backend(Arc::new(ScriptedBackend::new()));
        let doc = ProofDocument::parse(proof.text.clone()).unwrap();
        let outcome = sorrify(&doc, &gateway, 32).unwrap();
        prop_assert!(outcome.success);
        prop_assert!(outcome.iterations.len() <= proof.errors);
        prop_assert_eq!(outcome.document.list_sorry_sites().len(), proof.errors);
    }

    /// Block spans never partially overlap: any two blocks are disjoint or
    /// nested, and every block lies inside the body.
    #[test]
    fn block_spans_nest_or_are_disjoint(seed in 0u64..2000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nested = random_nested_document(&mut rng);
        let doc = ProofDocument::parse(nested.text.clone()).unwrap();
        let forest = doc.parse_blocks();
        let blocks = forest.blocks();
        for block in blocks {
            prop_assert!(doc.body_span().contains_span(block.span));
        }
        for a in blocks {
            for b in blocks {
                let disjoint = !a.span.intersects(b.span);
                let nested = a.span.contains_span(b.span) || b.span.contains_span(a.span);
                prop_assert!(disjoint || nested, "{:?} vs {:?}", a.span, b.span);
            }
        }
    }

    /// Line index round trip: the offset of a position computed from an
    /// offset is the original offset.
    #[test]
    fn line_index_offset_position_roundtrip(
        lines in prop::collection::vec("[a-z ]{0,12}", 1..12),
    ) {
        let mut text = format!("theorem t : True := by\n");
        for line in &lines {
            text.push_str("  ");
            text.push_str(line.trim_end());
            text.push('\n');
        }
        let Ok(doc) = ProofDocument::parse(text.clone()) else {
            return Ok(());
        };
        let li = doc.line_index();
        for offset in 0..doc.text().len() {
            let pos = li.position(offset);
            prop_assert_eq!(li.offset(pos), Some(offset));
        }
    }

    /// The script key ignores trailing whitespace per line and nothing else.
    #[test]
    fn script_key_normalizes_trailing_whitespace(code in "[a-z \n]{0,40}", pad in 0usize..4) {
        let padded: String = code
            .split('\n')
            .map(|line| format!("{line}{}", " ".repeat(pad)))
            .collect::<Vec<_>>()
            .join("\n");
        prop_assert_eq!(script_key(&code), script_key(&padded));
    }

    /// A statement always makes no progress against itself, even with its
    /// binders consistently renamed.
    #[test]
    fn no_progress_is_reflexive_under_renaming(suffix in "[a-z]{1,6}") {
        let parent = format!(
            "theorem t (x{suffix} y{suffix} : Nat) (h : x{suffix} = y{suffix}) : y{suffix} = x{suffix} := by"
        );
        let child = "lemma t_0 (a b : Nat) (hab : a = b) : b = a := by";
        prop_assert!(detect_no_progress(&parent, child));
        prop_assert!(detect_no_progress(&parent, &parent));
        // A different goal is progress.
        let other = "lemma t_0 (a b : Nat) (hab : a = b) : a = b := by";
        prop_assert!(!detect_no_progress(&parent, other));
    }
}
