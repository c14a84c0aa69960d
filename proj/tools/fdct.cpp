#include <string>
#include <vector>

#include "fdct/cli.hpp"

int main(int argc, char** argv) {
    return fdct::cli::run(std::vector<std::string>(argv, argv + argc));
}
