//! Front-end behavior over the corpus: lexer round-trips, parse determinism
//! and bounded lookahead, syntax-error positions, and reference diagnostics.

mod common;

use common::corpus_files;
use minigolo_core::ir::lower;
use minigolo_core::lexer::{tokenize, TokenKind};
use minigolo_core::parser::{parse_program, Parser};
use minigolo_core::passes::check_references;
use minigolo_core::pipeline::compile_source;

#[test]
fn every_ok_program_parses_and_tokens_round_trip() {
    for (name, source) in &corpus_files("ok") {
        let tokens = tokenize(source).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(tokens.last().unwrap().kind, TokenKind::Eof);
        assert_eq!(
            tokens.iter().filter(|t| t.kind == TokenKind::Eof).count(),
            1,
            "{name}: exactly one eof token"
        );
        // Every token's (line, column) points at its first character.
        let lines: Vec<&str> = source.split('\n').collect();
        for t in &tokens {
            if t.kind == TokenKind::Eof {
                continue;
            }
            let line = lines[(t.pos.line - 1) as usize];
            let col = (t.pos.col - 1) as usize;
            assert!(
                line[col..].starts_with(&t.lexeme),
                "{name}: token {t:?} does not match source"
            );
        }
        parse_program(&tokens).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn parsing_is_deterministic_and_lookahead_bounded() {
    for (name, source) in &corpus_files("ok") {
        let tokens = tokenize(source).unwrap();
        let first = parse_program(&tokens).unwrap();
        let second = parse_program(&tokens).unwrap();
        assert_eq!(first, second, "{name}: parse not deterministic");

        let mut parser = Parser::new(&tokens);
        parser.parse_modules().unwrap();
        assert!(
            parser.max_lookahead() <= 2,
            "{name}: lookahead {} exceeds LL(2)",
            parser.max_lookahead()
        );
    }
}

#[test]
fn bad_syntax_corpus_errors_with_in_file_positions() {
    for (name, source) in &corpus_files("bad-syntax") {
        let line_count = source.split('\n').count() as u32;
        match tokenize(source) {
            Err(e) => {
                assert!(e.pos.line >= 1 && e.pos.line <= line_count, "{name}: {e}");
            }
            Ok(tokens) => match parse_program(&tokens) {
                Err(e) => {
                    assert!(e.pos.line >= 1 && e.pos.line <= line_count, "{name}: {e}");
                }
                Ok(_) => panic!("{name}: expected a syntax error"),
            },
        }
    }
}

#[test]
fn bad_ref_corpus_names_the_offending_identifier() {
    // Which identifier each file should be reported for.
    let expected: &[(&str, &str)] = &[
        ("ambiguous_import.golo", "shared"),
        ("assign_captured.golo", "counter"),
        ("assign_to_let.golo", "frozen"),
        ("assign_to_param.golo", "n"),
        ("assign_undeclared.golo", "ghost"),
        ("duplicate_binding.golo", "x"),
        ("struct_as_value.golo", "Point"),
        ("undeclared_call.golo", "missing_function"),
        ("undeclared_var.golo", "m"),
    ];
    let files = corpus_files("bad-ref");
    assert_eq!(files.len(), expected.len(), "bad-ref corpus drifted");
    for ((name, source), (expected_name, ident)) in files.iter().zip(expected) {
        assert_eq!(name, expected_name);
        let message = match compile_source(source) {
            Ok(_) => panic!("{name}: expected a reference diagnostic"),
            Err(e) => e.to_string(),
        };
        assert!(
            message.contains(ident),
            "{name}: diagnostic {message:?} does not name {ident}"
        );
    }
}

#[test]
fn check_references_is_clean_on_ok_corpus() {
    for (name, source) in &corpus_files("ok") {
        let tokens = tokenize(source).unwrap();
        let modules: Vec<_> = parse_program(&tokens).unwrap().iter().map(lower).collect();
        let diagnostics = check_references(&modules);
        assert!(diagnostics.is_empty(), "{name}: {diagnostics:?}");
    }
}

#[test]
fn imported_name_resolution_and_ambiguity() {
    // A reference to an imported module's public function resolves.
    let src = "module a
import b
function main = |args| { println(helper(1)) }
module b
function helper = |n| -> n";
    assert!(compile_source(src).is_ok());

    // A function of the importing module shadows the import.
    let src = "module a
import b
function helper = |n| -> n
function main = |args| { println(helper(1)) }
module b
function helper = |n| -> n";
    assert!(compile_source(src).is_ok());

    // Private (local) functions are not importable.
    let src = "module a
import b
function main = |args| { println(hidden(1)) }
module b
local function hidden = |n| -> n";
    match compile_source(src) {
        Ok(_) => panic!("private functions must not be importable"),
        Err(e) => assert!(e.to_string().contains("hidden"), "{e}"),
    }
}
