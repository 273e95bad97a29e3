"""Syntactic structure: parsing, tree edit distance, structural deltas.

The parser is a deterministic recursive-descent pass over a Java-like
grammar. It is identifier-agnostic by construction: node kinds describe
grammatical roles (if_statement, call_expression, ...) and never carry
names, so two fragments that differ only in identifiers produce identical
trees. It is intentionally permissive about exotic constructs but raises
ParseError on unbalanced delimiters or truncated input.
"""

from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

MAX_NESTING = 300
DEFAULT_TED_NODE_CAP = 1500

# Kinds counted as control flow when computing logical density.
CONTROL_FLOW_KINDS = frozenset(
    {
        "if_statement",
        "for_statement",
        "while_statement",
        "do_statement",
        "switch_statement",
        "case_clause",
        "catch_clause",
        "conditional_expression",
        "return_statement",
    }
)


class ParseError(ValueError):
    pass


@dataclass
class SyntaxNode:
    kind: str
    children: List[int] = field(default_factory=list)


class SyntaxTree:
    """Arena-backed ordered tree of kind-labelled nodes."""

    def __init__(self, nodes: List[SyntaxNode], root: int) -> None:
        self.nodes = nodes
        self.root = root

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def kinds(self) -> Set[str]:
        return {n.kind for n in self.nodes}

    def postorder(self) -> List[int]:
        order: List[int] = []
        stack: List[Tuple[int, bool]] = [(self.root, False)]
        while stack:
            idx, done = stack.pop()
            if done:
                order.append(idx)
                continue
            stack.append((idx, True))
            for c in reversed(self.nodes[idx].children):
                stack.append((c, False))
        return order

    def depths(self) -> List[int]:
        """Depth per node, root = 1."""
        d = [0] * len(self.nodes)
        stack = [(self.root, 1)]
        while stack:
            idx, depth = stack.pop()
            d[idx] = depth
            for c in self.nodes[idx].children:
                stack.append((c, depth + 1))
        return d

    def to_nested(self) -> tuple:
        def build(idx: int) -> tuple:
            n = self.nodes[idx]
            return (n.kind, tuple(build(c) for c in n.children))

        return build(self.root)

    @classmethod
    def from_nested(cls, nested: tuple) -> "SyntaxTree":
        nodes: List[SyntaxNode] = []

        def build(item: tuple) -> int:
            kind, children = item[0], item[1]
            child_ids = [build(c) for c in children]
            nodes.append(SyntaxNode(kind, child_ids))
            return len(nodes) - 1

        root = build(nested)
        return cls(nodes, root)


# --------------------------------------------------------------------- lexer

_LEX_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>//[^\n]*|/\*.*?\*/)
    | (?P<string>"(?:\\.|[^"\\])*")
    | (?P<char>'(?:\\.|[^'\\])*')
    | (?P<number>0[xX][0-9a-fA-F]+[lL]?
        |\d+\.\d*(?:[eE][+-]?\d+)?[fFdD]?
        |\.\d+(?:[eE][+-]?\d+)?[fFdD]?
        |\d+(?:[eE][+-]?\d+)?[fFdDlL]?)
    | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
    | (?P<op>>>>=|>>>|>>=|<<=|==|!=|<=|>=|&&|\|\||\+\+|--|\+=|-=|\*=|/=|%=|&=|\|=|\^=|<<|>>|->|::)
    | (?P<punct>\S)
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORD_STATEMENTS = {
    "if", "for", "while", "do", "switch", "try", "return",
    "break", "continue", "throw", "synchronized",
}
_MODIFIERS = {
    "public", "private", "protected", "static", "final", "abstract",
    "synchronized", "native", "strictfp", "volatile", "transient", "default",
}
_PRIMITIVES = {"void", "int", "long", "short", "byte", "char", "boolean", "float", "double"}
_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="}
_TYPE_DECLS = {"class", "interface", "enum"}


def _lex(source: str) -> List[Tuple[str, str]]:
    out = []
    pos = 0
    for m in _LEX_RE.finditer(source):
        if m.start() != pos:
            raise ParseError(f"unlexable input at offset {pos}")
        pos = m.end()
        if m.lastgroup in ("ws", "comment"):
            continue
        out.append((m.lastgroup, m.group()))
    if pos != len(source):
        raise ParseError(f"unlexable input at offset {pos}")
    return out


# -------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, tokens: List[Tuple[str, str]]) -> None:
        self.toks = tokens
        self.pos = 0
        self.nodes: List[SyntaxNode] = []
        self.depth = 0

    # token plumbing

    def peek(self, offset: int = 0) -> str:
        i = self.pos + offset
        return self.toks[i][1] if i < len(self.toks) else ""

    def peek_kind(self, offset: int = 0) -> str:
        i = self.pos + offset
        return self.toks[i][0] if i < len(self.toks) else "eof"

    def at_end(self) -> bool:
        return self.pos >= len(self.toks)

    def advance(self) -> str:
        if self.at_end():
            raise ParseError("unexpected end of input")
        tok = self.toks[self.pos][1]
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        if self.peek() != text:
            got = self.peek() or "end of input"
            raise ParseError(f"expected {text!r}, got {got!r}")
        self.pos += 1

    def node(self, kind: str, children: Optional[List[int]] = None) -> int:
        self.nodes.append(SyntaxNode(kind, children or []))
        return len(self.nodes) - 1

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise ParseError("nesting too deep")

    def _leave(self) -> None:
        self.depth -= 1

    # entry

    def parse_program(self) -> SyntaxTree:
        children = []
        while not self.at_end():
            if self.peek() == "}":
                raise ParseError("unmatched '}'")
            children.append(self.parse_statement())
        root = self.node("program", children)
        return SyntaxTree(self.nodes, root)

    # statements

    def parse_statement(self) -> int:
        self._enter()
        try:
            return self._statement()
        finally:
            self._leave()

    def _statement(self) -> int:
        tok = self.peek()
        if tok == "{":
            return self.parse_block()
        if tok == ";":
            self.advance()
            return self.node("empty_statement")
        if tok == "if":
            return self._if()
        if tok == "for":
            return self._for()
        if tok == "while":
            self.advance()
            cond = self._paren_expr()
            return self.node("while_statement", [cond, self.parse_statement()])
        if tok == "do":
            self.advance()
            body = self.parse_statement()
            self.expect("while")
            cond = self._paren_expr()
            self.expect(";")
            return self.node("do_statement", [body, cond])
        if tok == "switch":
            return self._switch()
        if tok == "try":
            return self._try()
        if tok == "return":
            self.advance()
            children = [] if self.peek() == ";" else [self.parse_expression()]
            self.expect(";")
            return self.node("return_statement", children)
        if tok in ("break", "continue"):
            self.advance()
            if self.peek_kind() == "ident":
                self.advance()
            self.expect(";")
            return self.node(f"{tok}_statement")
        if tok == "throw":
            self.advance()
            expr = self.parse_expression()
            self.expect(";")
            return self.node("throw_statement", [expr])
        if tok == "synchronized" and self.peek(1) == "(":
            self.advance()
            lock = self._paren_expr()
            return self.node("synchronized_statement", [lock, self.parse_block()])
        if tok in ("import", "package"):
            kind = f"{tok}_declaration"
            while not self.at_end() and self.peek() != ";":
                self.advance()
            self.expect(";")
            return self.node(kind)
        if tok == "assert":
            self.advance()
            children = [self.parse_expression()]
            if self.peek() == ":":
                self.advance()
                children.append(self.parse_expression())
            self.expect(";")
            return self.node("assert_statement", children)
        # label: ident ':' statement (':' but not '::')
        if self.peek_kind() == "ident" and self.peek(1) == ":" and tok not in _MODIFIERS:
            self.advance()
            self.advance()
            return self.node("labeled_statement", [self.parse_statement()])
        return self._declaration_or_expression()

    def parse_block(self) -> int:
        self.expect("{")
        children = []
        while self.peek() != "}":
            if self.at_end():
                raise ParseError("unterminated block")
            children.append(self.parse_statement())
        self.advance()
        return self.node("block", children)

    def _paren_expr(self) -> int:
        self.expect("(")
        expr = self.parse_expression()
        self.expect(")")
        return expr

    def _if(self) -> int:
        self.advance()
        children = [self._paren_expr(), self.parse_statement()]
        if self.peek() == "else":
            self.advance()
            children.append(self.parse_statement())
        return self.node("if_statement", children)

    def _for(self) -> int:
        self.advance()
        self.expect("(")
        children: List[int] = []
        # for-each: (final)? type ident : expr
        mark = self.pos
        n_mark = len(self.nodes)
        try:
            if self.peek() == "final":
                self.advance()
            t = self._try_type()
            if t is not None and self.peek_kind() == "ident" and self.peek(1) == ":":
                self.advance()
                self.advance()
                var = self.node("variable_declaration", [t, self.node("identifier")])
                children = [var, self.parse_expression()]
                self.expect(")")
                children.append(self.parse_statement())
                return self.node("for_statement", children)
        except ParseError:
            pass
        self.pos, self.nodes = mark, self.nodes[:n_mark]
        if self.peek() != ";":
            children.append(self._declaration_or_expression(terminator=None))
        self.expect(";")
        if self.peek() != ";":
            children.append(self.parse_expression())
        self.expect(";")
        while self.peek() != ")":
            children.append(self.parse_expression())
            if self.peek() == ",":
                self.advance()
        self.expect(")")
        children.append(self.parse_statement())
        return self.node("for_statement", children)

    def _switch(self) -> int:
        self.advance()
        children = [self._paren_expr()]
        self.expect("{")
        while self.peek() != "}":
            if self.at_end():
                raise ParseError("unterminated switch")
            children.append(self._case_clause())
        self.advance()
        return self.node("switch_statement", children)

    def _case_clause(self) -> int:
        kids: List[int] = []
        if self.peek() == "case":
            self.advance()
            kids.append(self.parse_expression())
            while self.peek() == ",":
                self.advance()
                kids.append(self.parse_expression())
        elif self.peek() == "default":
            self.advance()
        else:
            raise ParseError(f"expected case label, got {self.peek()!r}")
        if self.peek() == "->":
            self.advance()
            kids.append(self.parse_statement())
            return self.node("case_clause", kids)
        self.expect(":")
        while self.peek() not in ("case", "default", "}"):
            if self.at_end():
                raise ParseError("unterminated switch")
            kids.append(self.parse_statement())
        return self.node("case_clause", kids)

    def _try(self) -> int:
        self.advance()
        children: List[int] = []
        if self.peek() == "(":
            # try-with-resources: parse declarations separated by ';'
            self.advance()
            while self.peek() != ")":
                children.append(self._declaration_or_expression(terminator=None))
                if self.peek() == ";":
                    self.advance()
            self.advance()
        children.append(self.parse_block())
        while self.peek() == "catch":
            self.advance()
            self.expect("(")
            kids = []
            t = self._try_type()
            if t is None:
                raise ParseError("expected exception type")
            kids.append(t)
            while self.peek() == "|":
                self.advance()
                extra = self._try_type()
                if extra is None:
                    raise ParseError("expected exception type")
                kids.append(extra)
            if self.peek_kind() == "ident":
                self.advance()
                kids.append(self.node("identifier"))
            self.expect(")")
            kids.append(self.parse_block())
            children.append(self.node("catch_clause", kids))
        if self.peek() == "finally":
            self.advance()
            children.append(self.node("finally_clause", [self.parse_block()]))
        return self.node("try_statement", children)

    # declarations vs expressions

    def _modifiers_and_annotations(self) -> Tuple[int, bool]:
        """Consume leading modifiers/annotations; returns (count, any)."""
        count = 0
        while True:
            if self.peek() == "@" and self.peek_kind(1) == "ident":
                self.advance()
                self.advance()
                while self.peek() == "." and self.peek_kind(1) == "ident":
                    self.advance()
                    self.advance()
                if self.peek() == "(":
                    self._skip_balanced("(", ")")
                count += 1
                continue
            if self.peek() in _MODIFIERS and not (self.peek() == "synchronized" and self.peek(1) == "("):
                # 'default' is only a modifier when a declaration follows
                if self.peek() == "default" and self.peek(1) == ":":
                    break
                self.advance()
                count += 1
                continue
            break
        return count, count > 0

    def _skip_balanced(self, open_t: str, close_t: str) -> None:
        self.expect(open_t)
        depth = 1
        while depth:
            if self.at_end():
                raise ParseError(f"unbalanced {open_t!r}")
            tok = self.advance()
            if tok == open_t:
                depth += 1
            elif tok == close_t:
                depth -= 1

    def _declaration_or_expression(self, terminator: Optional[str] = ";") -> int:
        mark = self.pos
        n_mark = len(self.nodes)
        _, had_mods = self._modifiers_and_annotations()
        mods = [self.node("modifiers")] if had_mods else []

        if self.peek() in _TYPE_DECLS:
            return self._type_declaration(mods)

        decl = self._try_declaration(mods, terminator)
        if decl is not None:
            return decl

        # not a declaration: rewind fully and parse as an expression statement
        self.pos, self.nodes = mark, self.nodes[:n_mark]
        expr = self.parse_expression()
        if terminator:
            self.expect(terminator)
            return self.node("expression_statement", [expr])
        return expr

    def _type_declaration(self, mods: List[int]) -> int:
        self.advance()
        if self.peek_kind() == "ident":
            self.advance()
        self._maybe_generic_suffix()
        while self.peek() in ("extends", "implements"):
            self.advance()
            while self.peek() != "{" and not self.at_end():
                self.advance()
        body = self.parse_block()
        return self.node("type_declaration", mods + [body])

    def _try_declaration(self, mods: List[int], terminator: Optional[str]) -> Optional[int]:
        mark = self.pos
        n_mark = len(self.nodes)
        t = self._try_type()
        if t is not None and self.peek_kind() == "ident":
            follower = self.peek(1)
            if follower == "(":
                return self._method_rest(mods, t, mark, n_mark)
            if follower in ("=", ";", ",", "[", ":") or (terminator is None and follower == ")"):
                return self._variable_rest(mods, t, terminator)
        # constructor: Ident(...) { ... }
        self.pos, self.nodes = mark, self.nodes[:n_mark]
        if self.peek_kind() == "ident" and self.peek(1) == "(":
            probe = self._find_matching_paren(self.pos + 1)
            if probe is not None and probe + 1 < len(self.toks) and self.toks[probe + 1][1] in ("{", "throws"):
                name = self.node("identifier")
                self.advance()
                params = self._parameter_list()
                self._throws_clause()
                body = self.parse_block()
                return self.node("method_declaration", mods + [name, params, body])
        self.pos, self.nodes = mark, self.nodes[:n_mark]
        return None

    def _find_matching_paren(self, open_pos: int) -> Optional[int]:
        if open_pos >= len(self.toks) or self.toks[open_pos][1] != "(":
            return None
        depth = 0
        for i in range(open_pos, len(self.toks)):
            tok = self.toks[i][1]
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth -= 1
                if depth == 0:
                    return i
        return None

    def _method_rest(self, mods: List[int], ret_type: int, mark: int, n_mark: int) -> Optional[int]:
        close = self._find_matching_paren(self.pos + 1)
        after = self.toks[close + 1][1] if close is not None and close + 1 < len(self.toks) else ""
        if after not in ("{", "throws", ";"):
            self.pos, self.nodes = mark, self.nodes[:n_mark]
            return None
        self.advance()
        name = self.node("identifier")
        params = self._parameter_list()
        self._throws_clause()
        children = mods + [ret_type, name, params]
        if self.peek() == ";":
            self.advance()
        else:
            children.append(self.parse_block())
        return self.node("method_declaration", children)

    def _throws_clause(self) -> None:
        if self.peek() == "throws":
            self.advance()
            while self.peek() not in ("{", ";") and not self.at_end():
                self.advance()

    def _parameter_list(self) -> int:
        self.expect("(")
        params = []
        while self.peek() != ")":
            if self.at_end():
                raise ParseError("unterminated parameter list")
            self._modifiers_and_annotations()
            t = self._try_type()
            if t is None:
                raise ParseError(f"expected parameter type, got {self.peek()!r}")
            if self.peek() == "...":
                self.advance()
            kids = [t]
            if self.peek_kind() == "ident":
                self.advance()
                kids.append(self.node("identifier"))
                while self.peek() == "[":
                    self.advance()
                    self.expect("]")
            params.append(self.node("formal_parameter", kids))
            if self.peek() == ",":
                self.advance()
        self.advance()
        return self.node("parameter_list", params)

    def _variable_rest(self, mods: List[int], t: int, terminator: Optional[str]) -> int:
        kids = mods + [t]
        while True:
            if self.peek_kind() != "ident":
                raise ParseError(f"expected variable name, got {self.peek()!r}")
            self.advance()
            kids.append(self.node("identifier"))
            while self.peek() == "[":
                self.advance()
                self.expect("]")
            if self.peek() == "=":
                self.advance()
                kids.append(self.parse_expression())
            if self.peek() == ",":
                self.advance()
                continue
            break
        if terminator:
            self.expect(terminator)
        return self.node("variable_declaration", kids)

    # types

    def _try_type(self) -> Optional[int]:
        """Attempt to parse a type; rewinds and returns None on failure."""
        mark = self.pos
        n_mark = len(self.nodes)
        try:
            kind = None
            if self.peek() in _PRIMITIVES:
                self.advance()
                kind = "primitive_type"
            elif self.peek_kind() == "ident":
                self.advance()
                while self.peek() == "." and self.peek_kind(1) == "ident":
                    self.advance()
                    self.advance()
                kind = "type_identifier"
            else:
                raise ParseError("not a type")
            if not self._maybe_generic_suffix():
                raise ParseError("not a generic suffix")
            dims = 0
            while self.peek() == "[" and self.peek(1) == "]":
                self.advance()
                self.advance()
                dims += 1
            node = self.node("array_type" if dims else kind)
            return node
        except ParseError:
            self.pos, self.nodes = mark, self.nodes[:n_mark]
            return None

    def _maybe_generic_suffix(self) -> bool:
        """Consume a balanced <...> of type-ish tokens. True if absent or consumed."""
        if self.peek() != "<":
            return True
        depth = 0
        i = self.pos
        allowed_punct = {"<", ">", ">>", ">>>", ",", ".", "?", "[", "]", "&"}
        while i < len(self.toks):
            k, tok = self.toks[i]
            if tok == "<":
                depth += 1
            elif tok in (">", ">>", ">>>"):
                depth -= len(tok)
                if depth < 0:
                    return False
                if depth == 0:
                    self.pos = i + 1
                    return True
            elif k == "ident" or tok in _PRIMITIVES or tok in ("extends", "super"):
                pass
            elif tok not in allowed_punct:
                return False
            i += 1
        return False

    # expressions

    def parse_expression(self) -> int:
        self._enter()
        try:
            return self._assignment()
        finally:
            self._leave()

    def _assignment(self) -> int:
        left = self._conditional()
        if self.peek() in _ASSIGN_OPS:
            self.advance()
            right = self._assignment()
            return self.node("assignment", [left, right])
        return left

    def _conditional(self) -> int:
        cond = self._binary(0)
        if self.peek() == "?":
            self.advance()
            then = self.parse_expression()
            self.expect(":")
            alt = self._conditional()
            return self.node("conditional_expression", [cond, then, alt])
        return cond

    _BINARY_LEVELS: Sequence[Set[str]] = (
        {"||"},
        {"&&"},
        {"|"},
        {"^"},
        {"&"},
        {"==", "!="},
        {"<", ">", "<=", ">=", "instanceof"},
        {"<<", ">>", ">>>"},
        {"+", "-"},
        {"*", "/", "%"},
    )

    def _binary(self, level: int) -> int:
        if level >= len(self._BINARY_LEVELS):
            return self._unary()
        ops = self._BINARY_LEVELS[level]
        left = self._binary(level + 1)
        while self.peek() in ops:
            op = self.advance()
            if op == "instanceof":
                t = self._try_type()
                right = t if t is not None else self._binary(level + 1)
            else:
                right = self._binary(level + 1)
            left = self.node("binary_expression", [left, right])
        return left

    def _unary(self) -> int:
        tok = self.peek()
        if tok in ("!", "~", "+", "-"):
            self.advance()
            return self.node("unary_expression", [self._unary()])
        if tok in ("++", "--"):
            self.advance()
            return self.node("update_expression", [self._unary()])
        if tok == "(":
            cast = self._try_cast()
            if cast is not None:
                return cast
        return self._postfix()

    def _try_cast(self) -> Optional[int]:
        mark = self.pos
        n_mark = len(self.nodes)
        self.advance()
        t = self._try_type()
        if t is not None and self.peek() == ")":
            primitive = self.nodes[t].kind in ("primitive_type", "array_type")
            nxt, nxt_kind = self.peek(1), self.peek_kind(1)
            starts_value = nxt_kind in ("ident", "number", "string", "char") or nxt in ("(", "!", "~", "new", "this", "super")
            if primitive or starts_value:
                self.advance()
                return self.node("cast_expression", [t, self._unary()])
        self.pos, self.nodes = mark, self.nodes[:n_mark]
        return None

    def _postfix(self) -> int:
        expr = self._primary()
        while True:
            tok = self.peek()
            if tok == "." :
                self.advance()
                self._maybe_generic_suffix()
                if self.peek() == "new":  # qualified new, rare
                    self.advance()
                if self.peek_kind() != "ident" and self.peek() not in ("this", "super", "class"):
                    raise ParseError(f"expected member name, got {self.peek()!r}")
                self.advance()
                if self.peek() == "(":
                    args = self._argument_list()
                    expr = self.node("call_expression", [expr, args])
                else:
                    expr = self.node("field_access", [expr])
            elif tok == "(":
                args = self._argument_list()
                expr = self.node("call_expression", [expr, args])
            elif tok == "[":
                self.advance()
                index = self.parse_expression()
                self.expect("]")
                expr = self.node("array_access", [expr, index])
            elif tok in ("++", "--"):
                self.advance()
                expr = self.node("update_expression", [expr])
            elif tok == "::":
                self.advance()
                if self.peek() == "new" or self.peek_kind() == "ident":
                    self.advance()
                expr = self.node("method_reference", [expr])
            else:
                return expr

    def _argument_list(self) -> int:
        self.expect("(")
        args = []
        while self.peek() != ")":
            if self.at_end():
                raise ParseError("unterminated argument list")
            args.append(self.parse_expression())
            if self.peek() == ",":
                self.advance()
        self.advance()
        return self.node("argument_list", args)

    def _primary(self) -> int:
        kind, tok = self.peek_kind(), self.peek()
        if kind == "number":
            self.advance()
            return self.node("number_literal")
        if kind == "string":
            self.advance()
            return self.node("string_literal")
        if kind == "char":
            self.advance()
            return self.node("character_literal")
        if tok in ("true", "false"):
            self.advance()
            return self.node("boolean_literal")
        if tok == "null":
            self.advance()
            return self.node("null_literal")
        if tok == "this":
            self.advance()
            return self.node("this")
        if tok == "super":
            self.advance()
            return self.node("super")
        if tok == "new":
            return self._new()
        if tok == "{":
            return self._array_initializer()
        if tok == "(":
            # lambda? (a, b) -> ...
            close = self._find_matching_paren(self.pos)
            if close is not None and close + 1 < len(self.toks) and self.toks[close + 1][1] == "->":
                self.pos = close + 2
                body = self.parse_block() if self.peek() == "{" else self.parse_expression()
                return self.node("lambda_expression", [body])
            self.advance()
            inner = self.parse_expression()
            self.expect(")")
            return self.node("parenthesized_expression", [inner])
        if kind == "ident":
            if self.peek(1) == "->":
                self.advance()
                self.advance()
                body = self.parse_block() if self.peek() == "{" else self.parse_expression()
                return self.node("lambda_expression", [body])
            self.advance()
            return self.node("identifier")
        if tok in _PRIMITIVES:
            # e.g. int.class
            self.advance()
            return self.node("primitive_type")
        raise ParseError(f"unexpected token {tok!r}" if tok else "unexpected end of input")

    def _new(self) -> int:
        self.advance()
        t = self._try_type()
        if t is None:
            raise ParseError(f"expected type after 'new', got {self.peek()!r}")
        kids = [t]
        if self.peek() == "[":
            while self.peek() == "[":
                self.advance()
                if self.peek() != "]":
                    kids.append(self.parse_expression())
                self.expect("]")
            if self.peek() == "{":
                kids.append(self._array_initializer())
            return self.node("array_creation", kids)
        if self.peek() == "(":
            kids.append(self._argument_list())
        if self.peek() == "{":  # anonymous class body
            kids.append(self.parse_block())
        return self.node("object_creation", kids)

    def _array_initializer(self) -> int:
        self.expect("{")
        kids = []
        while self.peek() != "}":
            if self.at_end():
                raise ParseError("unterminated array initializer")
            kids.append(self.parse_expression())
            if self.peek() == ",":
                self.advance()
        self.advance()
        return self.node("array_initializer", kids)


def parse(source: str) -> SyntaxTree:
    """Parse a fragment into a SyntaxTree. Raises ParseError on malformed input."""
    # the descent burns ~15 interpreter frames per nesting level, so give
    # MAX_NESTING levels room before our own guard fires
    limit = sys.getrecursionlimit()
    try:
        sys.setrecursionlimit(max(limit, MAX_NESTING * 20 + 200))
        return _Parser(_lex(source)).parse_program()
    finally:
        sys.setrecursionlimit(limit)


# -------------------------------------------------------- tree edit distance


class _Annotated:
    """Postorder labels, leftmost-leaf-descendants and keyroots."""

    def __init__(self, tree: SyntaxTree) -> None:
        order = tree.postorder()
        index_of = {node: i for i, node in enumerate(order)}
        self.labels = [tree.nodes[n].kind for n in order]
        self.lmds = [0] * len(order)
        for i, n in enumerate(order):
            node = tree.nodes[n]
            self.lmds[i] = i if not node.children else self.lmds[index_of[node.children[0]]]
        seen = {}
        for i, l in enumerate(self.lmds):
            seen[l] = i  # keeps the last (highest) node per lmd
        self.keyroots = sorted(seen.values())


def tree_edit_distance(a: SyntaxTree, b: SyntaxTree) -> int:
    """Exact ordered tree edit distance with unit costs (Zhang-Shasha)."""
    A, B = _Annotated(a), _Annotated(b)
    la, lb = A.lmds, B.lmds
    m, n = len(A.labels), len(B.labels)
    td = np.zeros((m, n), dtype=np.int64)

    for i in A.keyroots:
        for j in B.keyroots:
            ioff, joff = la[i] - 1, lb[j] - 1
            rows, cols = i - ioff + 1, j - joff + 1
            fd = np.zeros((rows, cols), dtype=np.int64)
            fd[:, 0] = np.arange(rows)
            fd[0, :] = np.arange(cols)
            for x in range(1, rows):
                for y in range(1, cols):
                    if la[x + ioff] == la[i] and lb[y + joff] == lb[j]:
                        cost = 0 if A.labels[x + ioff] == B.labels[y + joff] else 1
                        fd[x, y] = min(fd[x - 1, y] + 1, fd[x, y - 1] + 1, fd[x - 1, y - 1] + cost)
                        td[x + ioff, y + joff] = fd[x, y]
                    else:
                        p, q = la[x + ioff] - 1 - ioff, lb[y + joff] - 1 - joff
                        fd[x, y] = min(
                            fd[x - 1, y] + 1,
                            fd[x, y - 1] + 1,
                            fd[p, q] + td[x + ioff, y + joff],
                        )
    return int(td[m - 1, n - 1])


# ----------------------------------------------------- fingerprints and stats


def subtree_fingerprints(tree: SyntaxTree) -> Set[bytes]:
    """Merkle-style digest per subtree; identical structure => identical digest."""
    digests: List[bytes] = [b""] * tree.node_count
    for idx in tree.postorder():
        node = tree.nodes[idx]
        h = hashlib.blake2b(digest_size=8)
        h.update(node.kind.encode())
        h.update(b"(")
        for c in node.children:
            h.update(digests[c])
        h.update(b")")
        digests[idx] = h.digest()
    return set(digests)


def subtree_jaccard(a: SyntaxTree, b: SyntaxTree) -> float:
    fa, fb = subtree_fingerprints(a), subtree_fingerprints(b)
    return len(fa & fb) / len(fa | fb)


def shape_statistics(tree: SyntaxTree) -> dict:
    depths = tree.depths()
    width = {}
    for d in depths:
        width[d] = width.get(d, 0) + 1
    leaves = sum(1 for n in tree.nodes if not n.children)
    flow = sum(1 for n in tree.nodes if n.kind in CONTROL_FLOW_KINDS)
    return {
        "node_count": tree.node_count,
        "max_depth": max(depths),
        "max_width": max(width.values()),
        "leaf_count": leaves,
        "logical_density": flow / tree.node_count,
    }


STRUCTURAL_FIELDS: Tuple[str, ...] = (
    "d_logical_density",
    "d_max_depth",
    "d_node_count",
    "ted_norm",
    "subtree_jaccard",
    "leaf_ratio",
)


@dataclass
class StructuralResult:
    vector: np.ndarray
    parse_failed: bool = False
    ted_approx: bool = False


def structural_vector(
    a: Optional[SyntaxTree],
    b: Optional[SyntaxTree],
    ted_node_cap: int = DEFAULT_TED_NODE_CAP,
) -> StructuralResult:
    """6-dim structural delta between two parses.

    Either side being None (parse failure) yields a zero vector with the
    parse_failed flag set, so downstream stays shape-stable. Above the node
    cap the quadratic edit distance is replaced by 1 - subtree_jaccard and
    flagged as approximate.
    """
    if a is None or b is None:
        return StructuralResult(np.zeros(len(STRUCTURAL_FIELDS)), parse_failed=True)

    sa, sb = shape_statistics(a), shape_statistics(b)
    sj = subtree_jaccard(a, b)
    approx = max(a.node_count, b.node_count) > ted_node_cap
    if approx:
        ted_norm = 1.0 - sj
    else:
        ted_norm = tree_edit_distance(a, b) / (a.node_count + b.node_count)
    vec = np.array(
        [
            abs(sa["logical_density"] - sb["logical_density"]),
            abs(sa["max_depth"] - sb["max_depth"]) / max(sa["max_depth"], sb["max_depth"]),
            abs(sa["node_count"] - sb["node_count"]) / max(sa["node_count"], sb["node_count"]),
            ted_norm,
            sj,
            min(sa["leaf_count"], sb["leaf_count"]) / max(sa["leaf_count"], sb["leaf_count"]),
        ],
        dtype=np.float64,
    )
    return StructuralResult(vec, ted_approx=approx)
