"""128x64 monochrome frame rendering: view layout, 8x16 glyph rasterizer,
and the ASCII projection used by golden tests.

The screen is a 16x4 grid of 8x16 cells. Glyphs are a 5x7 font doubled
vertically, padded 1px left / 2px right, 2px below. Layouts use uppercase
only; anything outside the font renders as a filled block.
"""

from __future__ import annotations

from dataclasses import dataclass

WIDTH, HEIGHT = 128, 64
COLS, ROWS = 16, 4
CELL_W, CELL_H = 8, 16
ARROW_DOWN = "↓"
ARROW_UP = "↑"
BLOCK = "█"

# 5x7 font, one string per pixel row, '#' = lit
GLYPHS: dict[str, tuple[str, ...]] = {
    " ": (".....", ".....", ".....", ".....", ".....", ".....", "....."),
    "A": (".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "B": ("####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."),
    "C": (".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."),
    "D": ("####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."),
    "E": ("#####", "#....", "#....", "####.", "#....", "#....", "#####"),
    "F": ("#####", "#....", "#....", "####.", "#....", "#....", "#...."),
    "G": (".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"),
    "H": ("#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"),
    "I": (".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "J": ("..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."),
    "K": ("#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"),
    "L": ("#....", "#....", "#....", "#....", "#....", "#....", "#####"),
    "M": ("#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"),
    "N": ("#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"),
    "O": (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "P": ("####.", "#...#", "#...#", "####.", "#....", "#....", "#...."),
    "Q": (".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"),
    "R": ("####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"),
    "S": (".####", "#....", "#....", ".###.", "....#", "....#", "####."),
    "T": ("#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."),
    "U": ("#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    "V": ("#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."),
    "W": ("#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"),
    "X": ("#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"),
    "Y": ("#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."),
    "Z": ("#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"),
    "0": (".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."),
    "1": ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    "2": (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    "3": ("#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."),
    "4": ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    "5": ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    "6": ("..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."),
    "7": ("#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."),
    "8": (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    "9": (".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."),
    ">": ("#....", ".#...", "..#..", "...#.", "..#..", ".#...", "#...."),
    ".": (".....", ".....", ".....", ".....", ".....", ".##..", ".##.."),
    ":": (".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."),
    "-": (".....", ".....", ".....", "#####", ".....", ".....", "....."),
    "/": ("....#", "....#", "...#.", "..#..", ".#...", "#....", "#...."),
    ARROW_DOWN: ("..#..", "..#..", "..#..", "..#..", "#.#.#", ".###.", "..#.."),
    ARROW_UP: ("..#..", ".###.", "#.#.#", "..#..", "..#..", "..#..", "..#.."),
    BLOCK: ("#####", "#####", "#####", "#####", "#####", "#####", "#####"),
}


@dataclass(frozen=True)
class TextGrid:
    rows: tuple[str, str, str, str]

    def __post_init__(self):
        assert len(self.rows) == ROWS and all(len(r) == COLS for r in self.rows)


@dataclass(frozen=True)
class Frame:
    raster: bytes  # row-major, 16 bytes per pixel row, MSB leftmost

    def __post_init__(self):
        assert len(self.raster) * 8 == WIDTH * HEIGHT

    def bit(self, x: int, y: int) -> int:
        byte = self.raster[y * (WIDTH // 8) + x // 8]
        return (byte >> (7 - x % 8)) & 1


# -- views ---------------------------------------------------------------------

@dataclass(frozen=True)
class Splash:
    pass


@dataclass(frozen=True)
class WifiStatus:
    ssid: str
    joined: bool


@dataclass(frozen=True)
class ServerStatus:
    host: str
    port: int
    connected: bool


@dataclass(frozen=True)
class SwipeCardPrompt:
    pass


@dataclass(frozen=True)
class SwipeTagPrompt:
    pass


@dataclass(frozen=True)
class UserCard:
    name: str
    cash: int


@dataclass(frozen=True)
class ItemList:
    window: tuple          # up to 2 (name, cost) pairs
    selected: int | None   # index within the window
    has_above: bool
    has_below: bool
    total: int
    count: int


@dataclass(frozen=True)
class Notice:
    text: str


@dataclass(frozen=True)
class Paying:
    pass


@dataclass(frozen=True)
class Done:
    pass


DisplayView = (Splash | WifiStatus | ServerStatus | SwipeCardPrompt
               | SwipeTagPrompt | UserCard | ItemList | Notice | Paying | Done)


def _center(text: str) -> str:
    text = text.upper()[:COLS]
    pad = COLS - len(text)
    return " " * (pad // 2) + text + " " * (pad - pad // 2)


def _item_row(entry, marked: bool) -> str:
    name, cost = entry
    return (">" if marked else " ") + name.upper()[:10].ljust(10) + str(cost).rjust(5)[-5:]


def layout(view: DisplayView) -> TextGrid:
    """Render a view to the 16x4 character grid."""
    blank = " " * COLS
    if isinstance(view, Splash):
        rows = (blank, _center("SMART CART"), _center("BOOTING"), blank)
    elif isinstance(view, WifiStatus):
        rows = (_center("WIFI"), _center(view.ssid),
                _center("JOINED" if view.joined else "JOINING"), blank)
    elif isinstance(view, ServerStatus):
        rows = (_center("SERVER"), _center(view.host), _center("PORT %d" % view.port),
                _center("CONNECTED" if view.connected else "CONNECTING"))
    elif isinstance(view, SwipeCardPrompt):
        rows = (blank, _center("SWIPE CARD"), blank, blank)
    elif isinstance(view, SwipeTagPrompt):
        rows = (blank, _center("SWIPE TAG"), blank, blank)
    elif isinstance(view, UserCard):
        rows = (_center("HELLO"), _center(view.name), _center("CASH %d" % view.cash), blank)
    elif isinstance(view, ItemList):
        line = [blank, blank]
        for i, entry in enumerate(view.window[:2]):
            line[i] = _item_row(entry, view.selected == i)
        if view.has_above:
            line[0] = line[0][:COLS - 1] + ARROW_UP
        if view.has_below:
            line[1] = line[1][:COLS - 1] + ARROW_DOWN
        total, count = str(view.total), str(view.count)
        footer = total + " " * (COLS - len(total) - len(count)) + count
        rows = ("ITEMS".ljust(COLS), line[0], line[1], footer)
    elif isinstance(view, Notice):
        rows = (blank, _center(view.text), blank, blank)
    elif isinstance(view, Paying):
        rows = (blank, _center("PAYING..."), blank, blank)
    elif isinstance(view, Done):
        rows = (blank, _center("PAYMENT COMPLETE"), blank, blank)
    else:
        raise ValueError("not a display view: %r" % (view,))
    return TextGrid(rows)


# -- rasterizer ------------------------------------------------------------------

def _cell_bits(ch: str) -> tuple[str, ...]:
    return GLYPHS.get(ch, GLYPHS[BLOCK])


def rasterize(grid: TextGrid) -> Frame:
    raster = bytearray(WIDTH * HEIGHT // 8)
    for row, text in enumerate(grid.rows):
        for col, ch in enumerate(text):
            glyph = _cell_bits(ch)
            for gy, bits in enumerate(glyph):
                for gx, lit in enumerate(bits):
                    if lit != "#":
                        continue
                    x = col * CELL_W + 1 + gx
                    for y in (row * CELL_H + gy * 2, row * CELL_H + gy * 2 + 1):
                        raster[y * (WIDTH // 8) + x // 8] |= 1 << (7 - x % 8)
    return Frame(bytes(raster))


_REVERSE = {glyph: ch for ch, glyph in GLYPHS.items()}


def recognize(frame: Frame) -> TextGrid:
    """Reverse-lookup a rasterized frame back into grid characters."""
    rows = []
    for row in range(ROWS):
        chars = []
        for col in range(COLS):
            glyph = []
            for gy in range(7):
                y = row * CELL_H + gy * 2
                glyph.append("".join(
                    "#" if frame.bit(col * CELL_W + 1 + gx, y) else "."
                    for gx in range(5)))
            chars.append(_REVERSE.get(tuple(glyph), "?"))
        rows.append("".join(chars))
    return TextGrid(tuple(rows))


def render(view: DisplayView) -> Frame:
    return rasterize(layout(view))


def frame_to_ascii(shape) -> str:
    """Diff-friendly projection: one character per cell, 4 lines of 16."""
    grid = recognize(shape) if isinstance(shape, Frame) else shape
    out = []
    for row in grid.rows:
        out.append("".join(_ascii_char(c) for c in row))
    return "\n".join(out)


def _ascii_char(c: str) -> str:
    if c == ARROW_DOWN:
        return "v"
    if c == ARROW_UP:
        return "^"
    if " " <= c <= "~":
        return c
    return "?"


def frame_to_pbm(frame: Frame) -> bytes:
    """Binary PBM (P4), 1 = lit pixel."""
    return b"P4\n%d %d\n" % (WIDTH, HEIGHT) + frame.raster
