"""Tokenizer shared by the rule parser and the data-file reader."""

from __future__ import annotations

from dataclasses import dataclass

from .ast import LangError


class SyntaxErrorWithLocation(LangError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int
    value: object = None

    def __repr__(self):
        return "Token(%s, %r, %d:%d)" % (self.kind, self.text, self.line, self.column)


_TWO_CHAR = {
    "->": "IMPLIES_R",
    ">>": "IMPLIES_R",
    "<-": "IMPLIES_L",
    "<<": "IMPLIES_L",
    "&&": "AND",
    "||": "OR",
    "!=": "NEQ",
    "<=": "LEQ",
    ">=": "GEQ",
    "^2": "SQUARED",
}

_ONE_CHAR = {
    "&": "AND",
    "|": "PIPE",
    "!": "NOT",
    "~": "NOT",
    "(": "LPAREN",
    ")": "RPAREN",
    "{": "LBRACE",
    "}": "RBRACE",
    "[": "LBRACKET",
    "]": "RBRACKET",
    ",": "COMMA",
    ":": "COLON",
    ".": "PERIOD",
    "+": "PLUS",
    "-": "MINUS",
    "*": "STAR",
    "/": "SLASH",
    "=": "EQ",
    "@": "AT",
}


def tokenize(text: str):
    """Lex source text into a token list ending with EOF.

    Supports ``//`` line comments and ``/* */`` block comments anywhere.
    """
    tokens = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def error(message):
        raise SyntaxErrorWithLocation(message, line, col)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            if end < 0:
                error("unterminated block comment")
            for c in text[i : end + 2]:
                if c == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            i = end + 2
            continue
        start_line, start_col = line, col
        if ch in "\"'":
            quote = ch
            j = i + 1
            out = []
            while j < n and text[j] != quote:
                if text[j] == "\\":
                    if j + 1 >= n:
                        error("unterminated constant")
                    out.append(text[j + 1])
                    j += 2
                elif text[j] == "\n":
                    error("newline inside constant")
                else:
                    out.append(text[j])
                    j += 1
            if j >= n:
                error("unterminated constant")
            raw = text[i : j + 1]
            tokens.append(Token("STRING", raw, start_line, start_col, "".join(out)))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            raw = text[i:j]
            tokens.append(Token("NUMBER", raw, start_line, start_col, float(raw)))
            col += j - i
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            raw = text[i:j]
            tokens.append(Token("IDENT", raw, start_line, start_col, raw))
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(Token(_TWO_CHAR[two], two, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(Token(_ONE_CHAR[ch], ch, start_line, start_col))
            i += 1
            col += 1
            continue
        error("unexpected character %r" % ch)
    tokens.append(Token("EOF", "", line, col))
    return tokens
