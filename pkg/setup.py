import setuptools

import optispin.config

LONG_DESC = open("README.md").read()
VERSION = optispin.config.TOOL_VERSION

setuptools.setup(
    name="optispin",
    version=VERSION,
    description="Simulator for optically driven spin qubits coupled to a nuclear-spin bath",
    long_description_content_type="text/markdown",
    long_description=LONG_DESC,
    keywords="spin-qubit quantum-dot lindblad master-equation rabi ramsey spin-locking nuclear-bath raman",
    license="MIT",
    classifiers=[
        "Topic :: Scientific/Engineering :: Physics",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
    ],
    packages=["optispin", "optispin.utils"],
    package_data={"optispin": ["assets/presets/*.ini"]},
    entry_points={"console_scripts": ["optispin=optispin.__main__:main"]},
    python_requires=">=3.8",
    install_requires=["numpy>=1.20", "scipy>=1.6", "watchdog"],
    extras_require={"test": ["pytest"]},
    include_package_data=True,
    zip_safe=False,
)
