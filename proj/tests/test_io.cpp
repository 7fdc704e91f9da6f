#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <vawi/io.hpp>

using namespace vawi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vawi-io-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string line;
    std::getline(in, line);
    return line;
}

RealField sample_field() {
    Grid2D g = make_grid(9, 7, 12.5, 15.0, 2, -100.0, 40.0);
    RealField f(g);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int k = 0; k < g.n(); ++k) f.data[k] = uni(rng);
    return f;
}

SurveyData sample_survey() {
    SurveyData s;
    s.acq.sources = {{0.0, 0.0}, {10.0, 20.0}};
    s.acq.receivers = {{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}};
    s.frequencies_hz = {2.5, 7.0};
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int f = 0; f < 2; ++f) {
        Eigen::MatrixXcd blk(3, 2);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 2; ++c) blk(r, c) = cplx(uni(rng), uni(rng));
        s.data.push_back(blk);
    }
    return s;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("model files round-trip bit for bit") {
    TempDir td;
    RealField f = sample_field();
    fs::path p = td.path / "model.vafld";
    write_model_vafld(p, f, "slowness_sq", "s^2/m^2");

    ModelFile mf = read_model_vafld(p);
    CHECK(mf.field.grid == f.grid);
    CHECK(mf.quantity == "slowness_sq");
    CHECK(mf.units == "s^2/m^2");
    CHECK((mf.field.data - f.data).norm() == 0.0);

    // rewriting the re-read model reproduces the file byte for byte
    fs::path p2 = td.path / "model2.vafld";
    write_model_vafld(p2, mf.field, mf.quantity, mf.units);
    CHECK(slurp(p) == slurp(p2));

    // header is one line of JSON followed by exactly nx*nz float64
    std::string head = first_line(p);
    auto h = nlohmann::json::parse(head);
    CHECK(h.at("format") == "VAFLD/1");
    CHECK(h.at("nx") == 9);
    CHECK(h.at("x0") == -100.0);
    CHECK(fs::file_size(p) == head.size() + 1 + sizeof(double) * 63);
    CHECK_FALSE(fs::exists(td.path / "model.vafld.tmp"));
}

TEST_CASE("model files reject corruption") {
    TempDir td;
    RealField f = sample_field();
    fs::path p = td.path / "m.vafld";
    write_model_vafld(p, f, "velocity", "m/s");

    CHECK_THROWS_AS(read_model_vafld(td.path / "absent.vafld"), std::runtime_error);

    fs::path bad = td.path / "bad.vafld";
    std::ofstream(bad) << "{\"format\":\"OTHER/9\"}\n";
    CHECK_THROWS_AS(read_model_vafld(bad), std::runtime_error);

    std::string full = slurp(p);
    fs::path trunc = td.path / "trunc.vafld";
    std::ofstream(trunc, std::ios::binary) << full.substr(0, full.size() - 16);
    CHECK_THROWS_AS(read_model_vafld(trunc), std::runtime_error);

    fs::path extra = td.path / "extra.vafld";
    std::ofstream(extra, std::ios::binary) << full << "junk";
    CHECK_THROWS_AS(read_model_vafld(extra), std::runtime_error);
}

TEST_CASE("survey files round-trip and fix the payload order") {
    TempDir td;
    SurveyData s = sample_survey();
    fs::path p = td.path / "obs.vdata";
    write_survey_vdata(p, s);

    SurveyData r = read_survey_vdata(p);
    REQUIRE(r.acq.sources.size() == 2);
    REQUIRE(r.acq.receivers.size() == 3);
    REQUIRE(r.frequencies_hz == s.frequencies_hz);
    for (int f = 0; f < 2; ++f) CHECK((r.data[f] - s.data[f]).norm() == 0.0);
    CHECK(r.acq.receivers[2].x == 3.0);

    fs::path p2 = td.path / "obs2.vdata";
    write_survey_vdata(p2, r);
    CHECK(slurp(p) == slurp(p2));

    // payload is (re, im) float64 ordered source -> frequency -> receiver
    std::string head = first_line(p);
    std::string all = slurp(p);
    size_t off = head.size() + 1;
    CHECK(all.size() == off + 16 * 2 * 2 * 3);
    auto entry = [&](int s_i, int f_i, int r_i) {
        double pair[2];
        std::memcpy(pair, all.data() + off + 16 * ((s_i * 2 + f_i) * 3 + r_i), 16);
        return cplx(pair[0], pair[1]);
    };
    CHECK(entry(0, 0, 0) == s.data[0](0, 0));
    CHECK(entry(1, 0, 2) == s.data[0](2, 1));
    CHECK(entry(1, 1, 1) == s.data[1](1, 1));

    fs::path extra = td.path / "extra.vdata";
    std::ofstream(extra, std::ios::binary) << all << "x";
    CHECK_THROWS_AS(read_survey_vdata(extra), std::runtime_error);
    fs::path trunc = td.path / "trunc.vdata";
    std::ofstream(trunc, std::ios::binary) << all.substr(0, all.size() - 8);
    CHECK_THROWS_AS(read_survey_vdata(trunc), std::runtime_error);

    SurveyData bad = s;
    bad.data[0].resize(2, 2);
    CHECK_THROWS_AS(write_survey_vdata(td.path / "bad.vdata", bad),
                    std::invalid_argument);
}

TEST_CASE("history and scan tables carry fixed headers") {
    TempDir td;
    std::vector<HistoryRow> rows{{1, 0, 0.5, 0.25, 3.0, 1.5},
                                 {2, 0, 0.25, 0.125, 2.5, 1.25}};
    fs::path hp = td.path / "history.csv";
    write_history_csv(hp, rows);
    std::string text = slurp(hp);
    CHECK(first_line(hp) ==
          "k,batch,sum_src_residual_sq,sum_data_residual_sq,tv_m,tv_alpha");
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
    CHECK(text.find("\n2,0,0.25,0.125,2.5,1.25\n") != std::string::npos);

    ScanResult sc;
    sc.a_values = {-1.0, 0.0, 1.0};
    sc.b_values = {0.0};
    sc.fwi.setZero(3, 1);
    sc.wri.setZero(3, 1);
    sc.fwi(0, 0) = 2.0;
    sc.wri(2, 0) = 0.5;
    fs::path sp = td.path / "scan.csv";
    write_scan_csv(sp, sc);
    CHECK(first_line(sp) == "a,b,fwi,wri");
    std::string stext = slurp(sp);
    CHECK(std::count(stext.begin(), stext.end(), '\n') == 4);
    CHECK(stext.find("-1,0,2,0") != std::string::npos);
    CHECK(stext.find("1,0,0,0.5") != std::string::npos);
}

TEST_CASE("trace tables come with a sidecar description") {
    TempDir td;
    SeismogramResult r;
    r.dt = 0.025;
    r.v_reduction = 2500.0;
    r.offsets = {100.0, 200.0};
    r.traces.resize(2, 4);
    r.analytic.resize(2, 4);
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 4; ++k) {
            r.traces(i, k) = 0.1 * i + k;
            r.analytic(i, k) = cplx(r.traces(i, k) / 2, 0.0);
        }
    fs::path p = td.path / "traces.csv";
    write_traces_csv(p, r);
    CHECK(first_line(p) == "t,trace0,trace1");
    std::string text = slurp(p);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);

    auto meta = nlohmann::json::parse(slurp(td.path / "traces.csv.json"));
    CHECK(meta.at("dt") == 0.025);
    CHECK(meta.at("reduction_velocity") == 2500.0);
    CHECK(meta.at("offsets").size() == 2);
}

TEST_CASE("acquisition and frequency side files round-trip") {
    TempDir td;
    Acquisition acq;
    acq.sources = {{1.5, -2.5}};
    acq.receivers = {{0.0, 0.0}, {3.25, 4.75}};
    fs::path ap = td.path / "acquisition.json";
    write_acquisition_json(ap, acq);
    Acquisition back = read_acquisition_json(ap);
    REQUIRE(back.sources.size() == 1);
    REQUIRE(back.receivers.size() == 2);
    CHECK(back.sources[0].x == 1.5);
    CHECK(back.receivers[1].z == 4.75);

    fs::path fp = td.path / "frequencies.json";
    write_frequencies_json(fp, {2.5, 5.0, 7.0});
    CHECK(read_frequencies_json(fp) == std::vector<double>{2.5, 5.0, 7.0});
}

TEST_CASE("run summaries record the stop reason") {
    TempDir td;
    InversionResult res;
    res.reports.push_back({0, 12, true, 5e-4, 5e-6, 10.0, 0.1, 0.01});
    fs::path p = td.path / "summary.json";
    write_run_summary_json(p, res);
    auto j = nlohmann::json::parse(slurp(p));
    CHECK(j.at("stopped_by") == "residual_thresholds");
    REQUIRE(j.at("batches").size() == 1);
    CHECK(j["batches"][0].at("iterations") == 12);

    res.reports.push_back({1, 30, false, 0.1, 0.1, 10.0, 0.1, 0.01});
    write_run_summary_json(p, res);
    j = nlohmann::json::parse(slurp(p));
    CHECK(j.at("stopped_by") == "max_iterations");
}

TEST_CASE("interrupted writes leave the previous file intact") {
    TempDir td;
    fs::path p = td.path / "out.bin";
    atomic_write(p, [](std::ostream& out) { out << "first"; });
    CHECK(slurp(p) == "first");
    CHECK_THROWS_AS(atomic_write(p,
                                 [](std::ostream& out) {
                                     out << "partial";
                                     throw std::runtime_error("disk on fire");
                                 }),
                    std::runtime_error);
    CHECK(slurp(p) == "first");           // target untouched
    CHECK_FALSE(fs::exists(p.string() + ".tmp"));  // scratch cleaned up
}

}  // TEST_SUITE
