import random

import pytest

from apdlbench.apdl import (
    ApdlCommand,
    ParseError,
    parse_script,
    render_script,
    script_from_commands,
)


def test_parse_two_commands():
    script = parse_script("ESIZE,2\nSOLVE")
    assert [(c.name, c.args) for c in script.commands] == [("ESIZE", ("2",)), ("SOLVE", ())]
    assert script.commands[0].line_no == 1
    assert script.commands[1].line_no == 2


def test_comment_only_is_empty():
    assert parse_script("! comment only").commands == ()


def test_blank_lines_skipped():
    assert len(parse_script("\n\nSOLVE\n\n")) == 1


def test_name_normalized_to_upper():
    assert parse_script("esize,2").commands[0].name == "ESIZE"


def test_inline_comment_stripped():
    cmd = parse_script("ESIZE,2  ! mesh size").commands[0]
    assert cmd.args == ("2",)


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as err:
        parse_script("SOLVE\n2BAD,1")
    assert err.value.line_no == 2
    assert "line 2" in str(err.value)


def test_empty_script_renders_empty_text():
    assert render_script(parse_script("")) == ""


def test_set_last_renders_verbatim():
    assert render_script(parse_script("SET,LAST")) == "SET,LAST\n"


def test_round_trip_preserves_commands():
    text = "PREP7\nET,1,SOLID185\nESIZE,2\nVMESH,ALL\nSOLVE\nSET,LAST\nPLNSOL,U,SUM\n"
    script = parse_script(text)
    assert parse_script(render_script(script)).command_equal(script)


def test_round_trip_random_command_sequences():
    rng = random.Random(20240817)
    names = ["ESIZE", "SOLVE", "SET", "ET", "NSUBST", "AUTOTS", "MSHKEY", "K", "N2", "FINISH"]
    for _ in range(200):
        commands = [
            ApdlCommand(
                rng.choice(names),
                tuple(str(rng.randint(0, 99)) for _ in range(rng.randint(0, 4))),
            )
            for _ in range(rng.randint(0, 12))
        ]
        script = script_from_commands(commands)
        assert parse_script(render_script(script)).command_equal(script)


def test_empty_args_round_trip():
    script = parse_script("SFE,ALL,1,HFLUX,,5000")
    assert script.commands[0].args == ("ALL", "1", "HFLUX", "", "5000")
    assert render_script(script) == "SFE,ALL,1,HFLUX,,5000\n"
