"""Parser for the supported SQL subset.

Grammar: SELECT of aggregate items, FROM of comma-separated aliased tables,
WHERE a conjunction of binary equality joins (alias.col = alias.col) and
unary filters (=, IN, <, > against literals). Aggregates are parsed for
round-tripping but carry no semantics. Anything outside the subset is a
syntax error with a position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .catalog import Catalog, INT, STR
from .errors import SchemaError, SqlError

# ---------------------------------------------------------------------------
# Raw (catalog-free) form

Literal = Union[int, str]


@dataclass(frozen=True, slots=True)
class ColumnTerm:
    alias: str
    column: str


@dataclass(frozen=True, slots=True)
class Aggregate:
    func: str  # lowercase
    arg: ColumnTerm | None  # None encodes COUNT(*)
    label: str | None


@dataclass(frozen=True, slots=True)
class Comparison:
    column: ColumnTerm
    op: str  # '=', '<', '>'
    literal: Literal


@dataclass(frozen=True, slots=True)
class Membership:
    column: ColumnTerm
    values: tuple[Literal, ...]


RawFilter = Union[Comparison, Membership]


@dataclass(frozen=True, slots=True)
class RawJoin:
    left: ColumnTerm
    right: ColumnTerm


@dataclass(frozen=True)
class RawQuery:
    select: tuple[Aggregate, ...]
    tables: tuple[tuple[str, str], ...]  # (table, alias) in FROM order
    joins: tuple[RawJoin, ...]
    filters: tuple[RawFilter, ...]

    @property
    def base_tables(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.tables)

    def with_extra_filters(self, extra: tuple[RawFilter, ...]) -> "RawQuery":
        return RawQuery(self.select, self.tables, self.joins, self.filters + extra)


# ---------------------------------------------------------------------------
# Tokenizer

_KEYWORDS = {"select", "from", "where", "and", "as", "in"}
_SYMBOLS = {",": "COMMA", ".": "DOT", "(": "LPAREN", ")": "RPAREN",
            "=": "EQ", "<": "LT", ">": "GT", "*": "STAR", ";": "SEMI"}


@dataclass(frozen=True, slots=True)
class Token:
    type: str
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
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
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "KEYWORD" if word.lower() in _KEYWORDS else "IDENT"
            value = word.lower() if kind == "KEYWORD" else word
            tokens.append(Token(kind, value, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("NUMBER", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == "'":
            j = i + 1
            buf: list[str] = []
            while True:
                if j >= n:
                    raise SqlError("unterminated string literal", (start_line, start_col))
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    j += 1
                    break
                buf.append(text[j])
                j += 1
            tokens.append(Token("STRING", "".join(buf), start_line, start_col))
            col += j - i
            i = j
            continue
        sym = _SYMBOLS.get(ch)
        if sym is None:
            raise SqlError(f"unexpected character {ch!r}", (start_line, start_col))
        tokens.append(Token(sym, ch, start_line, start_col))
        i += 1
        col += 1
    tokens.append(Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser

_AGG_FUNCS = {"min", "max", "count", "sum", "avg"}


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> SqlError:
        tok = tok or self.peek()
        return SqlError(message, (tok.line, tok.col))

    def expect(self, type_: str, what: str) -> Token:
        tok = self.peek()
        if tok.type != type_:
            raise self.error(f"expected {what}, found {tok.value or 'end of input'!r}")
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok.type != "KEYWORD" or tok.value != word:
            raise self.error(f"expected {word.upper()}, found {tok.value or 'end of input'!r}")
        return self.advance()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.type == "KEYWORD" and tok.value == word

    # query := SELECT items FROM tables [WHERE conjunction] [';'] EOF
    def parse(self) -> RawQuery:
        self.expect_keyword("select")
        select = self.parse_select_items()
        self.expect_keyword("from")
        tables = self.parse_tables()
        aliases = {alias for _, alias in tables}
        joins: list[RawJoin] = []
        filters: list[RawFilter] = []
        if self.at_keyword("where"):
            self.advance()
            while True:
                self.parse_predicate(aliases, joins, filters)
                if self.at_keyword("and"):
                    self.advance()
                    continue
                break
        if self.peek().type == "SEMI":
            self.advance()
        if self.peek().type != "EOF":
            raise self.error("unsupported trailing syntax")
        return RawQuery(tuple(select), tuple(tables), tuple(joins), tuple(filters))

    def parse_select_items(self) -> list[Aggregate]:
        items = [self.parse_select_item()]
        while self.peek().type == "COMMA":
            self.advance()
            items.append(self.parse_select_item())
        return items

    def parse_select_item(self) -> Aggregate:
        tok = self.expect("IDENT", "an aggregate function")
        func = tok.value.lower()
        if func not in _AGG_FUNCS:
            raise self.error(f"unsupported select item {tok.value!r}", tok)
        self.expect("LPAREN", "'('")
        if self.peek().type == "STAR":
            if func != "count":
                raise self.error("'*' argument is only valid for COUNT")
            self.advance()
            arg = None
        else:
            arg = self.parse_column()
        self.expect("RPAREN", "')'")
        label = None
        if self.at_keyword("as"):
            self.advance()
            label = self.expect("IDENT", "an output name").value
        return Aggregate(func, arg, label)

    def parse_tables(self) -> list[tuple[str, str]]:
        tables = [self.parse_table()]
        while self.peek().type == "COMMA":
            self.advance()
            tables.append(self.parse_table())
        seen: set[str] = set()
        for _, alias in tables:
            if alias in seen:
                raise self.error(f"duplicate alias {alias!r}")
            seen.add(alias)
        return tables

    def parse_table(self) -> tuple[str, str]:
        table = self.expect("IDENT", "a table name").value
        alias = table
        if self.at_keyword("as"):
            self.advance()
            alias = self.expect("IDENT", "an alias").value
        return table, alias

    def parse_column(self) -> ColumnTerm:
        alias = self.expect("IDENT", "an alias").value
        self.expect("DOT", "'.'")
        column = self.expect("IDENT", "a column name").value
        return ColumnTerm(alias, column)

    def parse_predicate(
        self,
        aliases: set[str],
        joins: list[RawJoin],
        filters: list[RawFilter],
    ) -> None:
        col_tok = self.peek()
        left = self.parse_column()
        if left.alias not in aliases:
            raise self.error(f"undeclared alias {left.alias!r}", col_tok)
        tok = self.peek()
        if tok.type == "EQ":
            self.advance()
            rhs = self.peek()
            if rhs.type == "IDENT":
                right = self.parse_column()
                if right.alias not in aliases:
                    raise self.error(f"undeclared alias {right.alias!r}", rhs)
                if right.alias == left.alias:
                    raise self.error(
                        "join predicate within a single alias is not allowed", rhs
                    )
                joins.append(RawJoin(left, right))
                return
            filters.append(Comparison(left, "=", self.parse_literal()))
            return
        if tok.type in ("LT", "GT"):
            self.advance()
            num = self.expect("NUMBER", "an integer literal")
            op = "<" if tok.type == "LT" else ">"
            filters.append(Comparison(left, op, int(num.value)))
            return
        if tok.type == "KEYWORD" and tok.value == "in":
            self.advance()
            self.expect("LPAREN", "'('")
            values = [self.parse_literal()]
            while self.peek().type == "COMMA":
                self.advance()
                values.append(self.parse_literal())
            self.expect("RPAREN", "')'")
            filters.append(Membership(left, tuple(values)))
            return
        raise self.error(f"unsupported predicate operator {tok.value!r}", tok)

    def parse_literal(self) -> Literal:
        tok = self.peek()
        if tok.type == "STRING":
            self.advance()
            return tok.value
        if tok.type == "NUMBER":
            self.advance()
            return int(tok.value)
        raise self.error("expected a literal")


def parse_raw(text: str) -> RawQuery:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Bound form

@dataclass(frozen=True, order=True, slots=True)
class JoinPredicate:
    """Equality between two columns of two distinct slots, oriented so the
    smaller slot index comes first."""

    a_slot: int
    a_col: int
    b_slot: int
    b_col: int

    @classmethod
    def of(cls, slot1: int, col1: int, slot2: int, col2: int) -> "JoinPredicate":
        if slot1 == slot2:
            raise ValueError("join predicate endpoints must be distinct slots")
        if slot1 < slot2:
            return cls(slot1, col1, slot2, col2)
        return cls(slot2, col2, slot1, col1)

    def slots(self) -> tuple[int, int]:
        return (self.a_slot, self.b_slot)

    def columns(self) -> tuple[int, int]:
        return (self.a_col, self.b_col)


@dataclass(frozen=True, order=True, slots=True)
class BoundComparison:
    column: int
    op: str
    value: int


@dataclass(frozen=True, order=True, slots=True)
class BoundMembership:
    column: int
    sorted_values: tuple[int, ...]

    @property
    def values(self) -> frozenset[int]:
        return frozenset(self.sorted_values)


BoundAtom = Union[BoundComparison, BoundMembership]


def _atom_key(atom: BoundAtom) -> tuple:
    # comparisons sort before memberships so mixed conjunctions stay stable
    if isinstance(atom, BoundComparison):
        return (0, atom.column, atom.op, atom.value)
    return (1, atom.column, atom.sorted_values)


@dataclass
class Query:
    """A bound query: slot set I, per-slot filter conjunctions U, and the
    canonical join-predicate set J, plus the raw form for printing."""

    id: str
    raw: RawQuery
    slots: frozenset[int]
    filters: dict[int, tuple[BoundAtom, ...]]
    joins: frozenset[JoinPredicate]
    alias_slots: tuple[tuple[str, int], ...]
    template: str | None = None

    @property
    def base_tables(self) -> tuple[str, ...]:
        return self.raw.base_tables

    @property
    def sql(self) -> str:
        return print_query(self.raw)

    def slot_of(self, alias: str) -> int:
        for a, s in self.alias_slots:
            if a == alias:
                return s
        raise SqlError(f"query {self.id} has no alias {alias!r}")

    def signature(self):
        """Canonical bound content, used for equality in round-trip checks."""
        return (
            self.slots,
            tuple(sorted((s, tuple(sorted(atoms))) for s, atoms in self.filters.items())),
            tuple(sorted(self.joins)),
        )


def _assign_slots(raw: RawQuery, catalog: Catalog) -> dict[str, int]:
    """Alias -> global slot. Occurrences of one base table are numbered in
    FROM order."""
    seen: dict[str, int] = {}
    out: dict[str, int] = {}
    for table, alias in raw.tables:
        if table not in catalog.relations:
            raise SqlError(f"unknown table {table!r}")
        occ = seen.get(table, 0) + 1
        seen[table] = occ
        out[alias] = catalog.slot(table, occ)
    return out


def _bind_atom(f: RawFilter, slot: int, catalog: Catalog) -> BoundAtom:
    col_id = catalog.column(slot, f.column.column)
    kind = catalog.column_ref(col_id).kind

    def bind_literal(lit: Literal) -> int:
        if kind == INT:
            if not isinstance(lit, int):
                raise SqlError(
                    f"column {f.column.alias}.{f.column.column} is integer-valued "
                    f"but was compared with {lit!r}"
                )
            return lit
        if not isinstance(lit, str):
            raise SqlError(
                f"column {f.column.alias}.{f.column.column} is string-valued "
                f"but was compared with {lit!r}"
            )
        return catalog.interner.intern(lit)

    if isinstance(f, Comparison):
        if f.op in ("<", ">") and kind != INT:
            raise SqlError(
                f"ordered comparison on non-integer column "
                f"{f.column.alias}.{f.column.column}"
            )
        return BoundComparison(col_id, f.op, bind_literal(f.literal))
    return BoundMembership(col_id, tuple(sorted({bind_literal(v) for v in f.values})))


def bind_query(
    raw: RawQuery,
    catalog: Catalog,
    query_id: str,
    template: str | None = None,
) -> Query:
    slot_of = _assign_slots(raw, catalog)
    if len(slot_of) < 2:
        raise SqlError(f"query {query_id} must join at least two tables")

    joins: set[JoinPredicate] = set()
    try:
        for j in raw.joins:
            ls, rs = slot_of[j.left.alias], slot_of[j.right.alias]
            lc = catalog.column(ls, j.left.column)
            rc = catalog.column(rs, j.right.column)
            joins.add(JoinPredicate.of(ls, lc, rs, rc))

        filters: dict[int, list[BoundAtom]] = {}
        for f in raw.filters:
            slot = slot_of[f.column.alias]
            filters.setdefault(slot, []).append(_bind_atom(f, slot, catalog))
    except SchemaError as exc:
        raise SqlError(f"query {query_id}: {exc}") from None

    return Query(
        id=query_id,
        raw=raw,
        slots=frozenset(slot_of.values()),
        filters={s: tuple(sorted(atoms, key=_atom_key)) for s, atoms in filters.items()},
        joins=frozenset(joins),
        alias_slots=tuple((alias, slot_of[alias]) for _, alias in raw.tables),
        template=template,
    )


def parse_query(
    text: str,
    catalog: Catalog,
    query_id: str = "q",
    template: str | None = None,
) -> Query:
    return bind_query(parse_raw(text), catalog, query_id, template)


# ---------------------------------------------------------------------------
# Printing

def _quote(lit: Literal) -> str:
    if isinstance(lit, int):
        return str(lit)
    return "'" + lit.replace("'", "''") + "'"


def _print_column(c: ColumnTerm) -> str:
    return f"{c.alias}.{c.column}"


def _literal_key(lit: Literal) -> tuple:
    return (0, lit, "") if isinstance(lit, int) else (1, 0, lit)


def print_query(raw: RawQuery) -> str:
    """Canonical SQL text. FROM order is preserved (it fixes slot
    occurrences); predicates are emitted in a sorted canonical order, so
    parse -> print -> parse is a fixed point."""
    items = []
    for agg in raw.select:
        arg = "*" if agg.arg is None else _print_column(agg.arg)
        item = f"{agg.func.upper()}({arg})"
        if agg.label:
            item += f" AS {agg.label}"
        items.append(item)
    froms = [
        f"{table} AS {alias}" if alias != table else table
        for table, alias in raw.tables
    ]

    def join_key(j: RawJoin):
        a = (j.left.alias, j.left.column)
        b = (j.right.alias, j.right.column)
        return (min(a, b), max(a, b))

    preds: list[str] = []
    for j in sorted(raw.joins, key=join_key):
        a = (j.left.alias, j.left.column)
        b = (j.right.alias, j.right.column)
        lo, hi = (a, b) if a <= b else (b, a)
        preds.append(f"{lo[0]}.{lo[1]} = {hi[0]}.{hi[1]}")

    def filter_key(f: RawFilter):
        if isinstance(f, Comparison):
            return (f.column.alias, f.column.column, 0, f.op, _literal_key(f.literal))
        return (f.column.alias, f.column.column, 1, "in",
                tuple(_literal_key(v) for v in sorted(f.values, key=_literal_key)))

    for f in sorted(raw.filters, key=filter_key):
        if isinstance(f, Comparison):
            preds.append(f"{_print_column(f.column)} {f.op} {_quote(f.literal)}")
        else:
            vals = ", ".join(_quote(v) for v in sorted(f.values, key=_literal_key))
            preds.append(f"{_print_column(f.column)} IN ({vals})")

    sql = f"SELECT {', '.join(items)} FROM {', '.join(froms)}"
    if preds:
        sql += " WHERE " + " AND ".join(preds)
    return sql
