//! Deterministic corpus generators for the test suites: equality-chain toy
//! proofs with seeded errors and randomly nested block structures with
//! construction-time ground truth.

use rand::seq::SliceRandom;
use rand::Rng;

/// A chain proof with `errors` seeded mistakes, each inside its own `have`
/// block, so the sorrifier needs exactly `errors` patches.
#[derive(Debug, Clone)]
pub struct SeededProof {
    pub text: String,
    /// Seeded error count = expected sorrifier patch count.
    pub errors: usize,
    /// Chain length (number of `have` steps).
    pub steps: usize,
    /// 1-based indices of the corrupted steps, ascending; the labels of the
    /// expected sorry sites are `s{i}`.
    pub corrupted: Vec<usize>,
}

/// Build `theorem chain (x0 .. xm : Nat) (h1 : x0 = x1) .. : x0 = xm` proved
/// by chained `have` steps, then corrupt `errors` distinct step bodies. Each
/// corruption is either an unknown identifier or a type mismatch; both stay
/// local to their `have` body under the checker's error recovery.
pub fn seeded_chain_proof<R: Rng>(rng: &mut R, steps: usize, errors: usize) -> SeededProof {
    let steps = steps.max(1);
    let errors = errors.min(steps);
    let vars: Vec<String> = (0..=steps).map(|i| format!("x{i}")).collect();
    let hyps: Vec<String> = (1..=steps)
        .map(|i| format!("(h{i} : x{} = x{i})", i - 1))
        .collect();
    let mut text = format!(
        "theorem chain ({} : Nat)\n  {} :\n  x0 = x{steps} := by\n",
        vars.join(" "),
        hyps.join(" ")
    );

    let mut corrupt: Vec<usize> = (1..=steps).collect();
    corrupt.shuffle(rng);
    corrupt.truncate(errors);
    corrupt.sort_unstable();

    for i in 1..=steps {
        let goal = format!("x0 = x{i}");
        let honest = if i == 1 {
            "exact h1".to_string()
        } else {
            format!("exact Eq.trans s{} h{i}", i - 1)
        };
        let body = if corrupt.contains(&i) {
            // Unknown identifier, or a hypothesis of the wrong type. Step 1's
            // honest body is `exact h1`, so it only gets the unknown flavor.
            if i == 1 || rng.gen_bool(0.5) {
                format!("exact ghost{i}")
            } else {
                format!("exact h{i}")
            }
        } else {
            honest
        };
        text.push_str(&format!("  have s{i} : {goal} := by\n    {body}\n"));
    }
    text.push_str(&format!("  exact s{steps}\n"));
    SeededProof {
        text,
        errors,
        steps,
        corrupted: corrupt,
    }
}

/// Ground-truth block emitted while generating a nested document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedBlock {
    /// 1-based line of the `have` keyword.
    pub start_line: usize,
    /// 1-based last line of the block.
    pub end_line: usize,
    /// Spaces before the keyword.
    pub indent: usize,
}

/// A document of randomly nested `have` blocks plus the blocks it was built
/// from, for checking the indentation scanner against construction truth.
#[derive(Debug, Clone)]
pub struct NestedDocument {
    pub text: String,
    pub blocks: Vec<GeneratedBlock>,
    /// 1-based line span of the tactic body.
    pub body_lines: (usize, usize),
}

pub fn random_nested_document<R: Rng>(rng: &mut R) -> NestedDocument {
    let mut text = String::from("theorem nest (p : Prop) (hp : p) : p := by\n");
    let mut blocks = Vec::new();
    let mut line = 1usize;
    let mut label = 0usize;
    let top = rng.gen_range(1..=3);
    for _ in 0..top {
        emit_have(rng, &mut text, &mut blocks, &mut line, &mut label, 2, 0);
    }
    text.push_str("  exact hp\n");
    line += 1;
    NestedDocument {
        text,
        blocks,
        body_lines: (2, line),
    }
}

fn emit_have<R: Rng>(
    rng: &mut R,
    text: &mut String,
    blocks: &mut Vec<GeneratedBlock>,
    line: &mut usize,
    label: &mut usize,
    indent: usize,
    depth: usize,
) {
    *line += 1;
    let start_line = *line;
    *label += 1;
    let pad = " ".repeat(indent);
    text.push_str(&format!("{pad}have n{label} : p := by\n"));
    let index = blocks.len();
    blocks.push(GeneratedBlock {
        start_line,
        end_line: start_line,
        indent,
    });
    if depth < 3 {
        let children = rng.gen_range(0..=2);
        for _ in 0..children {
            emit_have(rng, text, blocks, line, label, indent + 2, depth + 1);
        }
    }
    *line += 1;
    text.push_str(&format!("{pad}  exact hp\n"));
    blocks[index].end_line = *line;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::ProofDocument;
    use crate::gateway::toy_check;
    use crate::gateway::{Gateway, ScriptedBackend, Verdict};
    use crate::sorrifier::sorrify;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn clean_chain_proof_verifies_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for steps in 1..=6 {
            let proof = seeded_chain_proof(&mut rng, steps, 0);
            let report = toy_check(&proof.text);
            assert_eq!(report.verdict, Verdict::Valid, "steps={steps}:\n{}", proof.text);
        }
    }

    #[test]
    fn seeded_errors_match_diagnostic_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let steps = rng.gen_range(1..=6);
            let errors = rng.gen_range(1..=steps);
            let proof = seeded_chain_proof(&mut rng, steps, errors);
            let report = toy_check(&proof.text);
            assert_eq!(report.verdict, Verdict::Invalid, "{}", proof.text);
            assert_eq!(
                report.errors().count(),
                proof.errors,
                "{}",
                proof.text
            );
        }
    }

    #[test]
    fn sorrifier_needs_exactly_one_patch_per_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gateway = Gateway::with_backend(Arc::new(ScriptedBackend::new()));
        for _ in 0..25 {
            let steps = rng.gen_range(1..=6);
            let errors = rng.gen_range(1..=steps);
            let proof = seeded_chain_proof(&mut rng, steps, errors);
            let doc = ProofDocument::parse(proof.text.clone()).unwrap();
            let outcome = sorrify(&doc, &gateway, 32).unwrap();
            assert!(outcome.success, "{}", proof.text);
            assert_eq!(outcome.iterations.len(), proof.errors, "{}", proof.text);
            assert_eq!(
                outcome.document.list_sorry_sites().len(),
                proof.errors,
                "{}",
                proof.text
            );
        }
    }

    #[test]
    fn nested_generator_matches_block_scanner() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let nested = random_nested_document(&mut rng);
            let doc = ProofDocument::parse(nested.text.clone()).unwrap();
            let forest = doc.parse_blocks();
            let scanned: Vec<GeneratedBlock> = forest
                .blocks()
                .iter()
                .map(|b| GeneratedBlock {
                    start_line: b.start_line,
                    end_line: b.end_line,
                    indent: b.indent,
                })
                .collect();
            assert_eq!(scanned, nested.blocks, "{}", nested.text);
        }
    }
}
