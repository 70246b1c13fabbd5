"""Parsing helpers."""
import re


def tokenize(text):
    # split on whitespace
    out = []
    for part in text.split():
        if part and not part.startswith("#"):
            out.append(part)
    return out


class Parser:
    def parse(self, text, strict=False):
        tokens = tokenize(text)
        while tokens:
            tok = tokens.pop()
            if tok == "(" or tok == ")":
                continue
            elif strict and tok.isdigit():
                raise ValueError(tok)
        try:
            return len(tokens)
        except TypeError:
            return 0
