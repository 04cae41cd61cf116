import shutil
from pathlib import Path

import pytest

from plotkit.cli import main
from plotkit.recipes import FigureRecipe, SchemaError, collect, load_csv
from plotkit.render import render

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture()
def bundle(tmp_path):
    target = tmp_path / "bundle"
    shutil.copytree(GOLDEN, target)
    return target


class TestRenderGolden:
    @pytest.mark.parametrize("figure", ["fig2", "fig2-inset", "fig3", "fig4"])
    def test_renders_png_and_svg(self, figure, bundle, tmp_path):
        out = tmp_path / "figs" / figure.replace("-", "_")
        written = render(FigureRecipe(figure=figure, input_dir=bundle, out=out))
        assert [p.suffix for p in written] == [".png", ".svg"]
        for path in written:
            assert path.exists() and path.stat().st_size > 1_000

    def test_shuffled_rows_render_identically(self, bundle, tmp_path):
        baseline = render(FigureRecipe("fig4", bundle, tmp_path / "a"))[0].read_bytes()
        for name in ("fig4_sep3um.csv", "fig4_sep6um.csv"):
            path = bundle / name
            lines = path.read_text().splitlines()
            shuffled = [lines[0]] + lines[1:][::-1]
            path.write_text("\n".join(shuffled) + "\n")
        reshuffled = render(FigureRecipe("fig4", bundle, tmp_path / "b"))[0].read_bytes()
        assert reshuffled == baseline

    def test_caption_carries_resolved_parameters(self, bundle, tmp_path):
        svg = render(FigureRecipe("fig2", bundle, tmp_path / "f"))[1].read_text()
        assert "omega_R_MHz=1" in svg


class TestSchemaFailures:
    def test_renamed_column_names_the_column(self, bundle, tmp_path):
        path = bundle / "fig2_inset_inset.csv"
        path.write_text(path.read_text().replace("P_D_tau", "PD"))
        with pytest.raises(SchemaError, match="P_D_tau"):
            render(FigureRecipe("fig2-inset", bundle, tmp_path / "x"))

    def test_empty_csv(self, bundle, tmp_path):
        (bundle / "fig3_w1.csv").write_text("")
        with pytest.raises(SchemaError, match="empty"):
            render(FigureRecipe("fig3", bundle, tmp_path / "x"))

    def test_header_only_csv(self, bundle, tmp_path):
        (bundle / "fig3_w2.csv").write_text("time_us,P_D\n")
        with pytest.raises(SchemaError, match="no data rows"):
            render(FigureRecipe("fig3", bundle, tmp_path / "x"))

    def test_missing_overlay_series(self, bundle, tmp_path):
        (bundle / "fig2_sqrt10.csv").unlink()
        with pytest.raises(SchemaError, match="sqrt10"):
            render(FigureRecipe("fig2", bundle, tmp_path / "x"))

    def test_missing_fig4_series(self, bundle, tmp_path):
        (bundle / "fig4_sep6um.csv").unlink()
        with pytest.raises(SchemaError, match="separation series"):
            render(FigureRecipe("fig4", bundle, tmp_path / "x"))

    def test_non_numeric_cell(self, bundle):
        path = bundle / "fig4_sep3um.csv"
        path.write_text(path.read_text().replace("0.9", "oops", 1))
        with pytest.raises(SchemaError, match="non-numeric"):
            collect(FigureRecipe("fig4", bundle, "unused"))

    def test_unknown_figure_id(self, bundle):
        with pytest.raises(SchemaError, match="unknown figure"):
            FigureRecipe("fig7", bundle, "x")


class TestLoadCsv:
    def test_sorts_on_x(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("time_us,P_D\n2,0.5\n0,0.1\n1,0.3\n")
        series = load_csv(path, ("time_us", "P_D"), "time_us")
        assert series.columns["time_us"].tolist() == [0.0, 1.0, 2.0]
        assert series.columns["P_D"].tolist() == [0.1, 0.3, 0.5]


class TestCli:
    def test_render_via_cli(self, bundle, tmp_path, capsys):
        out = tmp_path / "img" / "fig2"
        assert main(["--recipe", "fig2", "--input", str(bundle), "--out", str(out)]) == 0
        assert out.with_suffix(".png").exists()
        assert out.with_suffix(".svg").exists()

    def test_schema_error_exit_code(self, bundle, tmp_path, capsys):
        (bundle / "fig2_sqrt10.csv").unlink()
        code = main(["--recipe", "fig2", "--input", str(bundle),
                     "--out", str(tmp_path / "x")])
        assert code == 2
        assert "schema error" in capsys.readouterr().err
