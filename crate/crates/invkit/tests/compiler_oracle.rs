//! Cross-check parser precedence/associativity and evaluation semantics
//! against a reference C compiler: each expression is compiled with clang
//! and executed over a grid of operand values, and the exit results must
//! match our parse + evaluate pipeline.

use std::io::Write;
use std::process::Command;

use num_bigint::BigInt;

use invkit::predicate::{eval_expr, parse_predicate, Env};

const EXPRESSIONS: &[&str] = &[
    "a == b == c",
    "a - b - c",
    "a - (b - c)",
    "a < b == c < a",
    "a % b * c",
    "a / b / c",
    "-a * b",
    "-a % b",
    "!a + 2",
    "a ? b : c ? a : b",
    "(a ? b : c) ? a : b",
    "a && b || c",
    "a || b && c",
    "a + b * c == a * b + c",
    "a <= b != c >= a",
    "!(a - b) * c",
];

fn clang_available() -> bool {
    Command::new("clang")
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

#[test]
fn parser_and_eval_agree_with_reference_compiler() {
    if !clang_available() {
        eprintln!("clang not found; reference-compiler oracle skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let source_path = dir.path().join("oracle.c");
    let binary_path = dir.path().join("oracle");

    // One function per expression, evaluated over a value grid; results
    // are printed as "<index> <a> <b> <c> <value>" lines. Division and
    // modulo guard against zero divisors at the grid level by skipping
    // those triples on both sides.
    let mut source = String::from("#include <stdio.h>\n#include <string.h>\nint main() {\n");
    source.push_str("  for (long long a = -3; a <= 3; a++)\n");
    source.push_str("  for (long long b = -3; b <= 3; b++)\n");
    source.push_str("  for (long long c = -3; c <= 3; c++) {\n");
    for (idx, expr) in EXPRESSIONS.iter().enumerate() {
        let guarded = if expr.contains('/') || expr.contains('%') {
            // The divisor in every fixture is b or c.
            format!("    if (b != 0 && c != 0) printf(\"{idx} %lld %lld %lld %lld\\n\", a, b, c, (long long)({expr}));\n")
        } else {
            format!("    printf(\"{idx} %lld %lld %lld %lld\\n\", a, b, c, (long long)({expr}));\n")
        };
        source.push_str(&guarded);
    }
    source.push_str("  }\n  return 0;\n}\n");
    std::fs::write(&source_path, &source).unwrap();

    let compile = Command::new("clang")
        .args([
            "-O0",
            "-o",
            binary_path.to_str().unwrap(),
            source_path.to_str().unwrap(),
        ])
        .output()
        .expect("run clang");
    assert!(
        compile.status.success(),
        "clang failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = Command::new(&binary_path).output().expect("run oracle");
    assert!(run.status.success());

    let parsed: Vec<_> = EXPRESSIONS
        .iter()
        .map(|e| parse_predicate(e).unwrap())
        .collect();
    let mut checked = 0u64;
    for line in String::from_utf8_lossy(&run.stdout).lines() {
        let mut parts = line.split_whitespace();
        let idx: usize = parts.next().unwrap().parse().unwrap();
        let a: i64 = parts.next().unwrap().parse().unwrap();
        let b: i64 = parts.next().unwrap().parse().unwrap();
        let c: i64 = parts.next().unwrap().parse().unwrap();
        let expected: i64 = parts.next().unwrap().parse().unwrap();
        let env: Env = [("a", a), ("b", b), ("c", c)]
            .iter()
            .map(|(k, v)| (k.to_string(), BigInt::from(*v)))
            .collect();
        let ours = eval_expr(&parsed[idx], &env)
            .unwrap_or_else(|e| panic!("`{}` with a={a} b={b} c={c}: {e}", EXPRESSIONS[idx]));
        assert_eq!(
            ours,
            BigInt::from(expected),
            "`{}` disagrees with clang at a={a} b={b} c={c}",
            EXPRESSIONS[idx]
        );
        checked += 1;
    }
    // 7^3 = 343 triples; the division/modulo rows skip zero divisors.
    assert!(checked > 4000, "only {checked} rows checked");
    let mut out = std::io::stdout();
    let _ = writeln!(
        out,
        "reference-compiler oracle: {checked} rows across {} expressions agree",
        EXPRESSIONS.len()
    );
}
