import setuptools

setuptools.setup(
    name="pseudosphere",
    version='0.1.0',
    description="Structure equations, conservation-law hierarchies and numeric checks of pseudospherical-surface equations.",
    install_requires = [
        'sympy',
        'numpy',
        'dill'
    ],
    extras_require = {
        'test': ['pytest'],
    },
    packages = ['pseudosphere'],
    package_dir = {'pseudosphere': '.',},
    package_data = {'pseudosphere': ['models/*']},
    entry_points = {
        'console_scripts': ['pseudosphere = pseudosphere.cli:main'],
    },
    python_requires='>=3.7',
)
