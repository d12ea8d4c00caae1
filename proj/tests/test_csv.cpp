#include "doctest.h"
#include "hc/csv.hpp"
#include "hc/errors.hpp"

#include <cstdio>
#include <fstream>

using namespace hc;

namespace {
std::string tmp_file(const std::string& name) {
    return std::string("/tmp/hc_test_") + name;
}
}  // namespace

TEST_CASE("csv round trip") {
    CsvTable t;
    t.columns = {"a", "b"};
    t.rows = {{"1", "x"}, {"2.5", "y"}};
    const std::string path = tmp_file("rt.csv");
    write_csv(path, t);
    const CsvTable r = read_csv(path);
    CHECK(r.columns == t.columns);
    CHECK(r.rows == t.rows);
    CHECK(r.col("a") == 0);
    CHECK(r.col("missing") == -1);
    CHECK_THROWS_AS(r.col_required("missing"), LoadError);
    std::remove(path.c_str());
}

TEST_CASE("csv rejects ragged rows with a row number") {
    const std::string path = tmp_file("ragged.csv");
    {
        std::ofstream f(path);
        f << "a,b\n1,2\n3\n";
    }
    try {
        read_csv(path);
        CHECK(false);
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("format_double round trips through stod") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-11, 123456789.123456}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}
