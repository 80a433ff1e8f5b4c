"""APDL script model: a thin line-oriented parser and renderer.

Only the commands the simulator and patch rules inspect (ET, ESIZE, MSHKEY,
NSUBST, AUTOTS, SOLVE, SET and the plot family) are interpreted anywhere;
everything else is carried through verbatim. Full APDL semantics (macros,
*DO loops, parameter substitution) are out of scope.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

COMMENT_CHAR = "!"
_NAME_RE = re.compile(r"^[A-Z][A-Z0-9]*$")


class ParseError(ValueError):
    """A line that is neither blank, comment, nor COMMAND[,args]."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class ApdlCommand:
    name: str
    args: tuple[str, ...] = ()
    line_no: int = 0

    def render(self) -> str:
        if not self.args:
            return self.name
        return ",".join((self.name, *self.args))

    def same_command(self, other: "ApdlCommand") -> bool:
        """Equality ignoring line numbers."""
        return self.name == other.name and self.args == other.args


@dataclass(frozen=True)
class ApdlScript:
    commands: tuple[ApdlCommand, ...]
    source_text: str = ""

    def __len__(self) -> int:
        return len(self.commands)

    def names(self) -> list[str]:
        return [c.name for c in self.commands]

    def find_all(self, name: str) -> list[ApdlCommand]:
        return [c for c in self.commands if c.name == name]

    def first_index(self, name: str) -> int | None:
        for i, c in enumerate(self.commands):
            if c.name == name:
                return i
        return None

    def command_equal(self, other: "ApdlScript") -> bool:
        return len(self.commands) == len(other.commands) and all(
            a.same_command(b) for a, b in zip(self.commands, other.commands)
        )


def parse_script(text: str) -> ApdlScript:
    """Parse APDL text into one command per non-comment, non-blank line.

    Lines starting with ``!`` are comments; trailing ``! ...`` is stripped.
    Command names are uppercased; argument tokens keep their spelling.
    """
    commands: list[ApdlCommand] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(COMMENT_CHAR, 1)[0].strip()
        if not line:
            continue
        tokens = [t.strip() for t in line.split(",")]
        name = tokens[0].upper()
        if not _NAME_RE.match(name):
            raise ParseError(f"invalid command name {tokens[0]!r}", line_no)
        commands.append(ApdlCommand(name=name, args=tuple(tokens[1:]), line_no=line_no))
    return ApdlScript(commands=tuple(commands), source_text=text)


def render_script(script: ApdlScript) -> str:
    """Render back to text; parse(render(s)) is command-equal to s."""
    if not script.commands:
        return ""
    return "\n".join(c.render() for c in script.commands) + "\n"


def script_from_commands(commands: list[ApdlCommand] | tuple[ApdlCommand, ...]) -> ApdlScript:
    """Build a script from commands, renumbering lines sequentially."""
    renumbered = tuple(
        ApdlCommand(name=c.name, args=c.args, line_no=i)
        for i, c in enumerate(commands, start=1)
    )
    s = ApdlScript(commands=renumbered)
    return ApdlScript(commands=renumbered, source_text=render_script(s))
