//! Hand-written preprocessor snippets with their expected element trees.
//!
//! Expected blocks are `(line_start, line_end, depth, kind, pc)`; `pc` uses the
//! formula text syntax, and `@{text}` stands for the opaque atom of `text`.

pub enum Expect {
    Blocks(&'static [(usize, usize, usize, &'static str, &'static str)]),
    Malformed(usize),
    Unbalanced(usize),
}

pub struct Case {
    pub name: &'static str,
    pub source: &'static str,
    pub expect: Expect,
}

use Expect::*;

pub const CASES: &[Case] = &[
    Case { name: "empty", source: "", expect: Blocks(&[]) },
    Case { name: "no_directives", source: "int x;\nint y;\n", expect: Blocks(&[]) },
    Case {
        name: "single_ifdef",
        source: "int a;\n#ifdef CONFIG_A\nint b;\n#endif\n",
        expect: Blocks(&[(2, 4, 1, "ifdef", "A")]),
    },
    Case {
        name: "ifndef",
        source: "#ifndef CONFIG_A\nint x;\n#endif\n",
        expect: Blocks(&[(1, 3, 1, "ifndef", "!A")]),
    },
    Case {
        name: "nested_ifdef",
        source: "#ifdef CONFIG_A\n#ifdef CONFIG_B\nint x;\n#endif\n#endif\n",
        expect: Blocks(&[(1, 5, 1, "ifdef", "A"), (2, 4, 2, "ifdef", "(A && B)")]),
    },
    Case {
        name: "if_elif_else",
        source: "#if defined(CONFIG_A)\na();\n#elif defined(CONFIG_B)\nb();\n#else\nc();\n#endif\n",
        expect: Blocks(&[
            (1, 2, 1, "if", "A"),
            (3, 4, 1, "elif", "(!A && B)"),
            (5, 7, 1, "else", "(!A && !B)"),
        ]),
    },
    Case {
        name: "if_else_adjacent",
        source: "#if defined(CONFIG_A) && !defined(CONFIG_B)\n#else\n#endif\n",
        expect: Blocks(&[(1, 1, 1, "if", "(A && !B)"), (2, 3, 1, "else", "!(A && !B)")]),
    },
    Case {
        name: "long_elif_chain",
        source: "#ifdef CONFIG_A\n#elif defined(CONFIG_B)\n#elif defined(CONFIG_C)\n#elif defined(CONFIG_D)\n#else\n#endif\n",
        expect: Blocks(&[
            (1, 1, 1, "ifdef", "A"),
            (2, 2, 1, "elif", "(!A && B)"),
            (3, 3, 1, "elif", "(!A && !B && C)"),
            (4, 4, 1, "elif", "(!A && !B && !C && D)"),
            (5, 6, 1, "else", "(!A && !B && !C && !D)"),
        ]),
    },
    Case {
        name: "elif_without_else",
        source: "#if CONFIG_A\nx\n#elif CONFIG_B\ny\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "A"), (3, 5, 1, "elif", "(!A && B)")]),
    },
    Case {
        name: "bare_identifiers",
        source: "#if CONFIG_A || CONFIG_B\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "(A || B)")]),
    },
    Case {
        name: "defined_without_parens",
        source: "#if defined CONFIG_A && defined CONFIG_B\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "(A && B)")]),
    },
    Case {
        name: "double_negation",
        source: "#if !!defined(CONFIG_A)\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "A")]),
    },
    Case {
        name: "parenthesized",
        source: "#if (defined(CONFIG_A) || defined(CONFIG_B)) && !(defined(CONFIG_C))\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "((A || B) && !C)")]),
    },
    Case {
        name: "block_comment_hides_directives",
        source: "/*\n#ifdef CONFIG_A\n#endif\n*/\nint x;\n",
        expect: Blocks(&[]),
    },
    Case {
        name: "line_comment_hides_directive",
        source: "// #ifdef CONFIG_A\nint x; // #endif\n",
        expect: Blocks(&[]),
    },
    Case {
        name: "comment_opened_inside_block",
        source: "#ifdef CONFIG_A\n/* #endif\n#else */\n#endif\n",
        expect: Blocks(&[(1, 4, 1, "ifdef", "A")]),
    },
    Case {
        name: "string_hides_directive",
        source: "const char *s = \"abc\\\n#ifdef CONFIG_A\\\n\";\n#ifdef CONFIG_B\n#endif\n",
        expect: Blocks(&[(4, 5, 1, "ifdef", "B")]),
    },
    Case {
        name: "comment_after_directive",
        source: "#ifdef CONFIG_A /* enable A */\n#elif defined(CONFIG_B) // or B\n#endif\n",
        expect: Blocks(&[(1, 1, 1, "ifdef", "A"), (2, 3, 1, "elif", "(!A && B)")]),
    },
    Case {
        name: "continuation",
        source: "#if defined(CONFIG_A) && \\\n    defined(CONFIG_B)\nint x;\n#endif\n",
        expect: Blocks(&[(1, 4, 1, "if", "(A && B)")]),
    },
    Case {
        name: "continued_elif",
        source: "#ifdef CONFIG_A\n#elif defined(CONFIG_B) || \\\n  defined(CONFIG_C)\n#endif\n",
        expect: Blocks(&[(1, 1, 1, "ifdef", "A"), (2, 4, 1, "elif", "(!A && (B || C))")]),
    },
    Case {
        name: "opaque_comparison",
        source: "#if defined(CONFIG_A) || (X > 2)\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "(A || @{X > 2})")]),
    },
    Case {
        name: "opaque_whole_expression",
        source: "#if CONFIG_HZ > 100\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "@{CONFIG_HZ > 100}")]),
    },
    Case {
        name: "opaque_function_macro",
        source: "#if IS_ENABLED(CONFIG_A) && defined(CONFIG_B)\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "if", "(@{IS_ENABLED(CONFIG_A)} && B)")]),
    },
    Case {
        name: "integer_constants",
        source: "#if 0\n#elif 1\n#endif\n",
        expect: Blocks(&[(1, 1, 1, "if", "false"), (2, 3, 1, "elif", "true")]),
    },
    Case {
        name: "unprefixed_identifier",
        source: "#ifdef DEBUG\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "ifdef", "DEBUG")]),
    },
    Case {
        name: "three_levels_with_else",
        source: "#ifdef CONFIG_A\n#ifndef CONFIG_B\n#if CONFIG_C\nx\n#else\ny\n#endif\n#endif\n#endif\n",
        expect: Blocks(&[
            (1, 9, 1, "ifdef", "A"),
            (2, 8, 2, "ifndef", "(A && !B)"),
            (3, 4, 3, "if", "(A && !B && C)"),
            (5, 7, 3, "else", "(A && !B && !C)"),
        ]),
    },
    Case {
        name: "siblings",
        source: "#ifdef CONFIG_A\n#endif\nint x;\n#ifdef CONFIG_B\n#endif\n#ifndef CONFIG_C\n#endif\n",
        expect: Blocks(&[(1, 2, 1, "ifdef", "A"), (4, 5, 1, "ifdef", "B"), (6, 7, 1, "ifndef", "!C")]),
    },
    Case {
        name: "directive_whitespace",
        source: "  #  ifdef\tCONFIG_A\n\t#endif\n",
        expect: Blocks(&[(1, 2, 1, "ifdef", "A")]),
    },
    Case {
        name: "nested_in_else",
        source: "#ifdef CONFIG_A\n#else\n#ifdef CONFIG_B\n#endif\n#endif\n",
        expect: Blocks(&[(1, 1, 1, "ifdef", "A"), (2, 5, 1, "else", "!A"), (3, 4, 2, "ifdef", "(!A && B)")]),
    },
    Case {
        name: "nested_in_elif",
        source: "#if CONFIG_A\n#elif CONFIG_B\n#if CONFIG_C\n#elif CONFIG_D\n#endif\n#endif\n",
        expect: Blocks(&[
            (1, 1, 1, "if", "A"),
            (2, 6, 1, "elif", "(!A && B)"),
            (3, 3, 2, "if", "(!A && B && C)"),
            (4, 5, 2, "elif", "(!A && B && !C && D)"),
        ]),
    },
    Case {
        name: "other_directives_ignored",
        source: "#include <x.h>\n#define CONFIG_A 1\n#ifdef CONFIG_A\n#undef X\n#pragma once\n#error no\n#endif\n",
        expect: Blocks(&[(3, 7, 1, "ifdef", "A")]),
    },
    Case {
        name: "crlf_line_endings",
        source: "#ifdef CONFIG_A\r\nint x;\r\n#endif\r\n",
        expect: Blocks(&[(1, 3, 1, "ifdef", "A")]),
    },
    Case {
        name: "repeated_feature",
        source: "#if defined(CONFIG_A) && defined(CONFIG_A)\n#ifdef CONFIG_A\n#endif\n#endif\n",
        expect: Blocks(&[(1, 4, 1, "if", "A"), (2, 3, 2, "ifdef", "A")]),
    },
    Case { name: "unbalanced_parens", source: "int x;\n#if (defined(CONFIG_A)\n#endif\n", expect: Malformed(2) },
    Case { name: "empty_expression", source: "#if\n#endif\n", expect: Malformed(1) },
    Case { name: "dangling_operator", source: "#if defined(CONFIG_A) &&\n#endif\n", expect: Malformed(1) },
    Case { name: "endif_without_opener", source: "int x;\n#endif\n", expect: Unbalanced(2) },
    Case { name: "else_without_opener", source: "#else\n#endif\n", expect: Unbalanced(1) },
    Case { name: "elif_after_else", source: "#ifdef CONFIG_A\n#else\n#elif CONFIG_B\n#endif\n", expect: Unbalanced(3) },
    Case { name: "eof_inside_block", source: "#ifdef CONFIG_A\n#ifdef CONFIG_B\n#endif\n", expect: Unbalanced(1) },
];
