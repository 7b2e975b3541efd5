#include <string>
#include <vector>

#include "fieldseg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fieldseg::cli::run(args);
}
