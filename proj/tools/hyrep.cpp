#include "hyrep/cli.hpp"

int main(int argc, char** argv)
{
    return hyrep::cli::run(argc, argv);
}
